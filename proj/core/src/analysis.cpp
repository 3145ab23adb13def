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

#include "bsdlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bsdlab/error.hpp"

namespace bsdlab {

namespace {

// Error-free transformation: s + e == a + b exactly.
void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  const double bb = s - a;
  e = (a - (s - bb)) + (b - bb);
}

}  // namespace

std::vector<double> max_probability(const Matrix& preds) {
  std::vector<double> scores(preds.rows());
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    std::span<const double> p = preds.row(i);
    scores[i] = *std::max_element(p.begin(), p.end());
  }
  return scores;
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  if (id_scores.empty() || ood_scores.empty()) {
    throw Error("auroc: both score sets must be nonempty");
  }
  // Rank all scores jointly; tied groups share their average rank.
  const std::size_t n_pos = id_scores.size(), n_neg = ood_scores.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n_pos + n_neg);
  for (double s : id_scores) all.emplace_back(s, true);
  for (double s : ood_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (all[t].second) positive_rank_sum += average_rank;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos), q = static_cast<double>(n_neg);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double mean_flip_probability(const std::vector<std::vector<std::size_t>>& argmax_sequences) {
  if (argmax_sequences.empty()) throw Error("mean flip probability: no sequences");
  double total = 0.0;
  for (std::size_t s = 0; s < argmax_sequences.size(); ++s) {
    const auto& seq = argmax_sequences[s];
    if (seq.size() < 2) {
      throw Error("mean flip probability: sequence " + std::to_string(s) +
                  " is too short (needs at least 2 frames)");
    }
    std::size_t flips = 0;
    for (std::size_t t = 1; t < seq.size(); ++t) flips += seq[t] != seq[t - 1] ? 1 : 0;
    total += static_cast<double>(flips) / static_cast<double>(seq.size() - 1);
  }
  return total / static_cast<double>(argmax_sequences.size());
}

Matrix mu_matrix(const Matrix& preds, std::span<const int> labels, std::size_t k) {
  if (labels.size() != preds.rows() || preds.cols() != k) {
    throw Error("mu matrix: predictions and labels do not align");
  }
  Matrix sums(k, k);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    if (y >= k) throw Error("mu matrix: label out of range");
    for (std::size_t j = 0; j < k; ++j) sums(y, j) += preds(i, j);
    ++counts[y];
  }
  std::string missing;
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  }
  if (!missing.empty()) throw Error("mu matrix: no samples for classes " + missing);

  Matrix conditional(k, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < k; ++j) {
      conditional(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    }
  }
  Matrix mu(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      mu(i, j) = 0.5 * (conditional(i, j) + conditional(j, i));
    }
  }
  return mu;
}

DarkKnowledge delta_decomposition(const Matrix& preds, std::span<const int> labels,
                                  const Matrix& mu) {
  const std::size_t k = mu.rows();
  if (mu.cols() != k || preds.cols() != k || labels.size() != preds.rows()) {
    throw Error("delta decomposition: shapes do not align");
  }
  DarkKnowledge dk;
  dk.mu = mu;
  dk.delta = Matrix(preds.rows(), k);
  dk.delta_tail = Matrix(preds.rows(), k);
  dk.magnitudes.assign(preds.rows(), 0.0);
  dk.class_mean_magnitude.assign(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < preds.rows(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    double l1 = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      two_sum(preds(i, j), -mu(y, j), dk.delta(i, j), dk.delta_tail(i, j));
      l1 += std::abs(dk.delta(i, j) + dk.delta_tail(i, j));
    }
    dk.magnitudes[i] = l1;
    dk.class_mean_magnitude[y] += l1;
    ++counts[y];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) dk.class_mean_magnitude[c] /= static_cast<double>(counts[c]);
  }
  dk.mu_row_sums.assign(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) dk.mu_row_sums[i] += mu(i, j);
  }
  return dk;
}

Matrix DarkKnowledge::reconstruct(std::span<const int> labels) const {
  Matrix out(delta.rows(), delta.cols());
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const std::size_t y = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < delta.cols(); ++j) {
      double s = 0.0, e = 0.0;
      two_sum(mu(y, j), delta(i, j), s, e);
      out(i, j) = s + (e + delta_tail(i, j));
    }
  }
  return out;
}

Matrix surrogate_logits(const Matrix& preds, double floor) {
  Matrix out(preds.rows(), preds.cols());
  for (std::size_t j = 0; j < preds.size(); ++j) {
    out.data()[j] = std::log(std::max(preds.data()[j], floor));
  }
  return out;
}

Matrix temperature_scale(const Matrix& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  Matrix out(logits.rows(), logits.cols());
  std::vector<double> scaled(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::span<const double> z = logits.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) scaled[j] = z[j] / temperature;
    softmax_into(scaled, out.row(i));
  }
  return out;
}

double nll_at_temperature(const Matrix& logits, std::span<const int> labels,
                          double temperature) {
  std::vector<double> scaled(logits.cols()), logp(logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::span<const double> z = logits.row(i);
    for (std::size_t j = 0; j < z.size(); ++j) scaled[j] = z[j] / temperature;
    log_softmax_into(scaled, logp);
    total -= logp[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(logits.rows());
}

double fit_temperature(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) throw Error("fit_temperature: empty validation set");
  if (labels.size() != logits.rows()) {
    throw Error("fit_temperature: labels do not align with logits");
  }
  bool informative = false;
  for (std::size_t i = 0; i < logits.rows() && !informative; ++i) {
    std::span<const double> z = logits.row(i);
    informative = std::any_of(z.begin(), z.end(), [&](double v) { return v != z[0]; });
  }
  if (!informative) throw Error("fit_temperature: degenerate (all-identical) logits");

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = kMinTemperature, hi = kMaxTemperature;
  double a = hi - ratio * (hi - lo), b = lo + ratio * (hi - lo);
  double fa = nll_at_temperature(logits, labels, a);
  double fb = nll_at_temperature(logits, labels, b);
  while (hi - lo > 1e-9) {
    if (fa <= fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - ratio * (hi - lo);
      fa = nll_at_temperature(logits, labels, a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + ratio * (hi - lo);
      fb = nll_at_temperature(logits, labels, b);
    }
  }
  return 0.5 * (lo + hi);
}

double temp_adjusted_kl(const Matrix& snapshot_preds, const Matrix& final_preds,
                        double snapshot_temperature, double final_temperature) {
  if (!snapshot_preds.same_shape(final_preds) || final_preds.rows() == 0) {
    throw Error("temp_adjusted_kl: snapshot and final predictions are misaligned");
  }
  const Matrix snap = temperature_scale(surrogate_logits(snapshot_preds), snapshot_temperature);
  const Matrix fin = temperature_scale(surrogate_logits(final_preds), final_temperature);
  double total = 0.0;
  for (std::size_t i = 0; i < fin.rows(); ++i) total += kl_div(fin.row(i), snap.row(i));
  return total / static_cast<double>(fin.rows());
}

}  // namespace bsdlab
