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

#include "bsdlab/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "bsdlab/error.hpp"

namespace bsdlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error("matrix data length " + std::to_string(data_.size()) +
                " does not match shape " + std::to_string(rows_) + "x" +
                std::to_string(cols_));
  }
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

bool on_simplex(std::span<const double> p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) return false;
    sum += v;
  }
  return !p.empty() && std::abs(sum - 1.0) <= tol;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> one_hot(std::size_t index, std::size_t k) {
  std::vector<double> v(k, 0.0);
  v.at(index) = 1.0;
  return v;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (!all_finite(logits)) throw Error("non-finite logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - top);
    sum += out[j];
  }
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] /= sum;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

void log_softmax_into(std::span<const double> logits, std::span<double> out) {
  if (!all_finite(logits)) throw Error("non-finite logits");
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  const double log_norm = top + std::log(sum);
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - log_norm;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_div(std::span<const double> p, std::span<const double> q, double floor) {
  double kl = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] == 0.0) continue;
    kl += p[j] * (std::log(std::max(p[j], floor)) - std::log(std::max(q[j], floor)));
  }
  // Rounding can leave tiny negatives for p == q.
  return std::max(kl, 0.0);
}

double soft_cross_entropy(std::span<const double> target,
                          std::span<const double> pred, double floor) {
  double ce = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    if (target[j] == 0.0) continue;
    ce -= target[j] * std::log(std::max(pred[j], floor));
  }
  return ce;
}

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h) {
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const double up = f(probe);
    probe[j] = x[j] - h;
    const double down = f(probe);
    probe[j] = x[j];
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

namespace {

std::string block_label(std::span<const std::string> names, std::size_t b) {
  std::string label = "block " + std::to_string(b);
  if (b < names.size()) label += " (" + names[b] + ")";
  return label;
}

}  // namespace

void optimizer_step(std::span<Matrix> params, std::span<const Matrix> grads,
                    OptimizerState& state, std::span<const std::string> names) {
  if (params.size() != grads.size()) {
    throw Error("optimizer_step: " + std::to_string(params.size()) +
                " parameter blocks but " + std::to_string(grads.size()) +
                " gradient blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].same_shape(grads[b])) {
      throw Error("optimizer_step: shape mismatch in " + block_label(names, b) +
                  ": parameter " + shape_string(params[b]) + ", gradient " +
                  shape_string(grads[b]));
    }
    if (!all_finite(grads[b].data())) {
      throw Error("optimizer_step: non-finite gradient in " + block_label(names, b));
    }
  }

  const OptimizerConfig& cfg = state.config;
  const bool adam = cfg.kind == OptimizerKind::kAdam;
  if (state.first_moment.empty()) {
    for (const Matrix& p : params) {
      state.first_moment.emplace_back(p.rows(), p.cols());
      if (adam) state.second_moment.emplace_back(p.rows(), p.cols());
    }
  }
  if (state.first_moment.size() != params.size() ||
      (adam && state.second_moment.size() != params.size())) {
    throw Error("optimizer_step: optimizer state has the wrong number of blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!state.first_moment[b].same_shape(params[b]) ||
        (adam && !state.second_moment[b].same_shape(params[b]))) {
      throw Error("optimizer_step: moment buffer shape mismatch in " +
                  block_label(names, b));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t b = 0; b < params.size(); ++b) {
    std::span<double> p = params[b].data();
    std::span<const double> g = grads[b].data();
    std::span<double> m = state.first_moment[b].data();
    if (adam) {
      std::span<double> v = state.second_moment[b].data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j] + cfg.weight_decay * p[j];
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
        const double m_hat = m[j] / bias1;
        const double v_hat = v[j] / bias2;
        p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      }
    } else {
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j] + cfg.weight_decay * p[j];
        m[j] = cfg.momentum * m[j] + gj;
        p[j] -= cfg.lr * m[j];
      }
    }
  }
}

}  // namespace bsdlab
