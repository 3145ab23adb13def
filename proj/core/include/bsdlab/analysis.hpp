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

#ifndef BSDLAB_ANALYSIS_HPP_
#define BSDLAB_ANALYSIS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "bsdlab/numerics.hpp"

namespace bsdlab {

inline constexpr std::size_t kDefaultBins = 15;

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  double confidence = 0.0;  // mean max-probability in the bin
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double accuracy = 0.0;
  double ece = 0.0;
  double sce = 0.0;
  double ace = 0.0;
  double nll = 0.0;
  std::size_t bins = kDefaultBins;
  std::vector<ReliabilityBin> reliability;
};

// preds is n x k (rows on the simplex); labels has n entries.
double accuracy(const Matrix& preds, std::span<const int> labels);

// Equal-width bins over (0, 1] on the max probability; bin b holds
// confidences in ((b)/B, (b+1)/B], with 0 falling in the first bin.
std::vector<ReliabilityBin> reliability_bins(const Matrix& preds, std::span<const int> labels,
                                             std::size_t bins = kDefaultBins);

// sum_b (n_b / n) |acc_b - conf_b| over max-probability bins.
double ece(const Matrix& preds, std::span<const int> labels, std::size_t bins = kDefaultBins);

// Classwise ECE with static equal-width bins, averaged over classes:
// (1/K) sum_k sum_b (n_kb / n) |acc_kb - conf_kb|.
double sce(const Matrix& preds, std::span<const int> labels, std::size_t bins = kDefaultBins);

// Classwise error over adaptive equal-mass bins:
// (1/(K R)) sum_k sum_r |acc_kr - conf_kr|, empty bins skipped.
double ace(const Matrix& preds, std::span<const int> labels, std::size_t bins = kDefaultBins);

// -(1/n) sum_i ln max(p_{i,y_i}, floor).
double nll(const Matrix& preds, std::span<const int> labels, double floor = kProbFloor);

CalibrationReport calibration_report(const Matrix& preds, std::span<const int> labels,
                                     std::size_t bins = kDefaultBins);

// Max probability of each row, the OOD score.
std::vector<double> max_probability(const Matrix& preds);

// Mann-Whitney AUROC with in-distribution scores as positives; ties count 1/2.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

// Fraction of adjacent frames whose predicted class changes, averaged over
// sequences. Every sequence needs at least two frames.
double mean_flip_probability(const std::vector<std::vector<std::size_t>>& argmax_sequences);

// mu = (M + M^T) / 2, where row i of M is the mean prediction over samples
// labeled i. Throws when a class has no samples.
Matrix mu_matrix(const Matrix& preds, std::span<const int> labels, std::size_t k);

// Sample-wise deviation delta_i = pred_i - mu_{y_i}. The difference is kept as
// an unevaluated pair (delta + delta_tail, the tail being the exact rounding
// error of the subtraction) so that re-adding mu reproduces predictions
// bit-for-bit.
struct DarkKnowledge {
  Matrix mu;
  Matrix delta;
  Matrix delta_tail;
  std::vector<double> magnitudes;          // L1 norm per sample
  std::vector<double> class_mean_magnitude;
  std::vector<double> mu_row_sums;

  Matrix reconstruct(std::span<const int> labels) const;
};

DarkKnowledge delta_decomposition(const Matrix& preds, std::span<const int> labels,
                                  const Matrix& mu);

// log(max(p, floor)) row-wise; stands in for logits when only probabilities
// were recorded.
Matrix surrogate_logits(const Matrix& preds, double floor = kProbFloor);

// softmax(logits / temperature) row-wise.
Matrix temperature_scale(const Matrix& logits, double temperature);

double nll_at_temperature(const Matrix& logits, std::span<const int> labels,
                          double temperature);

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;

// Golden-section search for the temperature minimizing validation NLL on
// [0.05, 20]. Throws when every row's logits are constant.
double fit_temperature(const Matrix& logits, std::span<const int> labels);

// Mean over samples of KL(final_T || snapshot_T), each side temperature
// scaled (on surrogate logits) by its own temperature.
double temp_adjusted_kl(const Matrix& snapshot_preds, const Matrix& final_preds,
                        double snapshot_temperature, double final_temperature);

}  // namespace bsdlab

#endif  // BSDLAB_ANALYSIS_HPP_
