/*
 * Copyright 2026 The bsdlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsdlab/analysis.hpp"
#include "bsdlab/error.hpp"

namespace bsdlab {

namespace {

void check_inputs(const Matrix& preds, std::span<const int> labels, std::size_t bins,
                  const char* what) {
  if (preds.rows() == 0) throw Error(std::string(what) + ": empty input");
  if (labels.size() != preds.rows()) {
    throw Error(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                std::to_string(preds.rows()) + " predictions");
  }
  if (bins == 0) throw Error(std::string(what) + ": bin count must be positive");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= preds.cols()) {
      throw Error(std::string(what) + ": label " + std::to_string(l) + " out of range");
    }
  }
}

std::size_t bin_index(double confidence, std::size_t bins) {
  const double scaled = std::ceil(confidence * static_cast<double>(bins));
  if (scaled <= 1.0) return 0;
  return std::min(static_cast<std::size_t>(scaled) - 1, bins - 1);
}

struct BinSums {
  double confidence = 0.0;
  double hits = 0.0;
  std::size_t count = 0;
};

}  // namespace

double accuracy(const Matrix& preds, std::span<const int> labels) {
  check_inputs(preds, labels, 1, "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    if (argmax(preds.row(i)) == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.rows());
}

std::vector<ReliabilityBin> reliability_bins(const Matrix& preds, std::span<const int> labels,
                                             std::size_t bins) {
  check_inputs(preds, labels, bins, "reliability");
  std::vector<BinSums> sums(bins);
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    std::span<const double> p = preds.row(i);
    const std::size_t top = argmax(p);
    BinSums& s = sums[bin_index(p[top], bins)];
    s.confidence += p[top];
    s.hits += top == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
    ++s.count;
  }
  std::vector<ReliabilityBin> out(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = static_cast<double>(b) / static_cast<double>(bins);
    out[b].upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    out[b].count = sums[b].count;
    if (sums[b].count > 0) {
      const double n = static_cast<double>(sums[b].count);
      out[b].confidence = sums[b].confidence / n;
      out[b].accuracy = sums[b].hits / n;
    }
  }
  return out;
}

double ece(const Matrix& preds, std::span<const int> labels, std::size_t bins) {
  const std::vector<ReliabilityBin> rb = reliability_bins(preds, labels, bins);
  const double n = static_cast<double>(preds.rows());
  double total = 0.0;
  for (const ReliabilityBin& b : rb) {
    if (b.count == 0) continue;
    total += static_cast<double>(b.count) / n * std::abs(b.accuracy - b.confidence);
  }
  return total;
}

double sce(const Matrix& preds, std::span<const int> labels, std::size_t bins) {
  check_inputs(preds, labels, bins, "sce");
  const std::size_t k = preds.cols();
  const double n = static_cast<double>(preds.rows());
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<BinSums> sums(bins);
    for (std::size_t i = 0; i < preds.rows(); ++i) {
      const double p = preds(i, c);
      BinSums& s = sums[bin_index(p, bins)];
      s.confidence += p;
      s.hits += static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0;
      ++s.count;
    }
    for (const BinSums& s : sums) {
      if (s.count == 0) continue;
      const double m = static_cast<double>(s.count);
      total += m / n * std::abs(s.hits / m - s.confidence / m);
    }
  }
  return total / static_cast<double>(k);
}

double ace(const Matrix& preds, std::span<const int> labels, std::size_t bins) {
  check_inputs(preds, labels, bins, "ace");
  const std::size_t k = preds.cols();
  const std::size_t n = preds.rows();
  const std::size_t used_bins = std::min(bins, n);
  std::vector<std::size_t> order(n);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds(a, c) < preds(b, c);
    });
    for (std::size_t r = 0; r < used_bins; ++r) {
      const std::size_t begin = r * n / used_bins;
      const std::size_t end = (r + 1) * n / used_bins;
      double conf = 0.0, hits = 0.0;
      for (std::size_t t = begin; t < end; ++t) {
        conf += preds(order[t], c);
        hits += static_cast<std::size_t>(labels[order[t]]) == c ? 1.0 : 0.0;
      }
      const double m = static_cast<double>(end - begin);
      total += std::abs(hits / m - conf / m);
    }
  }
  return total / static_cast<double>(k * used_bins);
}

double nll(const Matrix& preds, std::span<const int> labels, double floor) {
  check_inputs(preds, labels, 1, "nll");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    total -= std::log(std::max(preds(i, static_cast<std::size_t>(labels[i])), floor));
  }
  return total / static_cast<double>(preds.rows());
}

CalibrationReport calibration_report(const Matrix& preds, std::span<const int> labels,
                                     std::size_t bins) {
  CalibrationReport r;
  r.bins = bins;
  r.accuracy = accuracy(preds, labels);
  r.reliability = reliability_bins(preds, labels, bins);
  r.ece = ece(preds, labels, bins);
  r.sce = sce(preds, labels, bins);
  r.ace = ace(preds, labels, bins);
  r.nll = nll(preds, labels);
  return r;
}

}  // namespace bsdlab
