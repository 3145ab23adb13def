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

#ifndef BSDLAB_NUMERICS_HPP_
#define BSDLAB_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bsdlab {

// Floor applied inside every logarithm of a probability.
inline constexpr double kProbFloor = 1e-12;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double value);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

bool all_finite(std::span<const double> values);

// True when every entry lies in [0, 1] and the entries sum to one within tol.
bool on_simplex(std::span<const double> p, double tol = 1e-9);

// Index of the first maximal entry.
std::size_t argmax(std::span<const double> values);

std::vector<double> one_hot(std::size_t index, std::size_t k);

// Max-subtracted softmax. Throws Error("non-finite logits").
std::vector<double> softmax(std::span<const double> logits);
void softmax_into(std::span<const double> logits, std::span<double> out);
void log_softmax_into(std::span<const double> logits, std::span<double> out);

// Shannon entropy in nats with 0 ln 0 = 0.
double entropy(std::span<const double> p);

// sum_j p_j ln(max(p_j, floor) / max(q_j, floor)).
double kl_div(std::span<const double> p, std::span<const double> q,
              double floor = kProbFloor);

// -sum_j target_j ln(max(pred_j, floor)).
double soft_cross_entropy(std::span<const double> target,
                          std::span<const double> pred,
                          double floor = kProbFloor);

// Central-difference gradient estimate, one coordinate at a time.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h = 1e-5);

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.01;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

// Moment buffers are allocated on the first step and must keep matching the
// parameter shapes afterwards. SGD uses only first_moment (the velocity).
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// Applies one SGD-momentum or Adam update in place. names (optional, parallel
// to params) label blocks in error messages.
void optimizer_step(std::span<Matrix> params, std::span<const Matrix> grads,
                    OptimizerState& state,
                    std::span<const std::string> names = {});

}  // namespace bsdlab

#endif  // BSDLAB_NUMERICS_HPP_
