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

#ifndef BSDLAB_TARGETS_HPP_
#define BSDLAB_TARGETS_HPP_

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsdlab/numerics.hpp"

namespace bsdlab {

// Per-sample Dirichlet evidence under discounted conjugate updating.
//
// Each sample i carries concentration parameters alpha_i, stored factorized
// as the normalized mean y_i = alpha_i / A_i and the total mass
// A_i = sum_j alpha_ij. Observing a prediction p discounts the old evidence
// by gamma and adds p:
//
//   alpha_i <- gamma * alpha_i + p
//   w       =  gamma * A_i / (gamma * A_i + 1)
//   y_i     <- w * y_i + (1 - w) * p
//   A_i     <- gamma * A_i + 1
//
// The factorized form stays bounded at gamma = 1, where raw alpha grows
// without limit.
class EvidenceStore {
 public:
  // Prior alpha_ij = c on the labeled class and epsilon elsewhere, so
  // A_i = c + (k - 1) * epsilon.
  static EvidenceStore init_prior(std::span<const int> labels, std::size_t k,
                                  double c, double epsilon, double gamma);

  // Restores a snapshot. targets is n x k, mass has n entries.
  EvidenceStore(Matrix targets, std::vector<double> mass, double gamma);

  std::size_t size() const noexcept { return targets_.rows(); }
  std::size_t classes() const noexcept { return targets_.cols(); }
  double gamma() const noexcept { return gamma_; }

  std::span<const double> target(std::size_t i) const { return targets_.row(i); }
  double mass(std::size_t i) const { return mass_[i]; }
  const Matrix& targets() const noexcept { return targets_; }
  const std::vector<double>& masses() const noexcept { return mass_; }

  // Weight the next update puts on the stored target.
  double history_weight(std::size_t i) const;

  // Applies the discounted update to row i. Predictions off the simplex by
  // less than 1e-6 are renormalized; anything further is rejected.
  void update(std::size_t i, std::span<const double> pred);

  // Overwrites a row; used by tests and snapshot restores only.
  void set_row(std::size_t i, std::span<const double> target, double mass);

  // CSV snapshot: sample_id,A,y_0..y_{k-1}, full round-trip precision.
  void write_csv(const std::filesystem::path& path) const;
  static EvidenceStore read_csv(const std::filesystem::path& path, double gamma);

  double mean_mass() const;

 private:
  Matrix targets_;
  std::vector<double> mass_;
  double gamma_;
};

// A_t = gamma^t A_0 + (1 - gamma^t) / (1 - gamma); A_0 + t at gamma = 1.
double evidence_mass_closed_form(double initial_mass, double gamma, std::size_t t);

// Stationary evidence mass 1 / (1 - gamma). Throws at gamma = 1.
double fixed_point(double gamma);

// target^(1/tau) renormalized. tau = 1 returns the input unchanged.
std::vector<double> sharpen(std::span<const double> target, double tau);

// Prediction that may be a few ulps off the simplex: renormalized when within
// 1e-6, otherwise an Error.
std::vector<double> checked_simplex(std::span<const double> pred);

// Zero-initialized exponential accumulator with bias correction:
//   Z_i <- m * Z_i + (1 - m) * p,  target_i = Z_i / (1 - m^count_i).
class TemporalEnsemble {
 public:
  TemporalEnsemble(std::size_t n, std::size_t k, double momentum);

  void update(std::size_t i, std::span<const double> pred);
  std::size_t count(std::size_t i) const { return counts_[i]; }
  std::vector<double> target(std::size_t i) const;  // requires count(i) > 0
  const Matrix& accumulator() const noexcept { return accum_; }
  const std::vector<std::size_t>& counts() const noexcept { return counts_; }
  void restore(Matrix accum, std::vector<std::size_t> counts);

 private:
  Matrix accum_;
  std::vector<std::size_t> counts_;
  double momentum_;
};

enum class StrategyMode { kBsd, kBaseline, kLabelSmoothing, kPsKd, kDlb, kTe };
enum class Granularity { kEpoch, kMiniBatch };

std::string to_string(StrategyMode mode);
std::optional<StrategyMode> parse_strategy_mode(const std::string& text);

struct StrategyConfig {
  StrategyMode mode = StrategyMode::kBsd;
  double gamma = 0.95;
  double c = 1000.0;
  double epsilon = 0.0;
  double tau = 1.0;               // sharpening of BSD targets
  double ls_alpha = 0.1;          // label smoothing
  double pskd_alpha = 0.8;        // PS-KD terminal weight, ramped linearly
  double te_momentum = 0.6;
  double te_weight = 0.5;         // fixed distillation weight for TE
  double dlb_alpha = 1.0;         // DLB distillation weight
  Granularity granularity = Granularity::kEpoch;

  // Granularity the mode uses when none is requested explicitly.
  static Granularity default_granularity(StrategyMode mode);
  void validate() const;
};

// Strategy layer: owns the per-sample state of whichever method is selected
// and produces the training target for each sample.
//
//   baseline  one-hot, state never changes (the c -> infinity limit)
//   ls        (1 - a) one-hot + a / k
//   bsd       sharpen(y_i, tau) from the evidence store
//   ps-kd     (1 - a_t) one-hot + a_t * last prediction, a_t = a_T * t / T;
//             the last prediction is an evidence store with gamma = 0
//   dlb       the same gamma = 0 store, updated per mini-batch, mixed with
//             weight a / (1 + a)
//   te        (1 - w) one-hot + w * bias-corrected temporal ensemble
class TargetStrategy {
 public:
  TargetStrategy(StrategyConfig cfg, std::span<const int> labels, std::size_t k,
                 std::size_t total_epochs);

  const StrategyConfig& config() const noexcept { return cfg_; }

  // Training target for sample i during epoch (1-based).
  std::vector<double> target(std::size_t i, std::size_t epoch) const;

  // Records the prediction used for sample i's loss. Applied immediately at
  // mini-batch granularity, at end_epoch() otherwise.
  void observe(std::size_t i, std::span<const double> pred);
  void end_epoch();

  bool has_pending() const noexcept { return pending_count_ > 0; }
  bool updates_state() const noexcept;

  const EvidenceStore& store() const noexcept { return store_; }
  EvidenceStore& mutable_store() noexcept { return store_; }
  const TemporalEnsemble* ensemble() const noexcept {
    return ensemble_ ? &*ensemble_ : nullptr;
  }
  TemporalEnsemble* mutable_ensemble() noexcept { return ensemble_ ? &*ensemble_ : nullptr; }

 private:
  void apply(std::size_t i, std::span<const double> pred);

  StrategyConfig cfg_;
  std::vector<int> labels_;
  std::size_t classes_;
  std::size_t total_epochs_;
  EvidenceStore store_;
  std::optional<TemporalEnsemble> ensemble_;
  Matrix pending_;
  std::vector<char> has_pending_row_;
  std::size_t pending_count_ = 0;
};

// Free-function form of TargetStrategy::target over explicit state. For ps-kd
// and dlb the store row holds the last prediction; te reads the ensemble,
// which must then be non-null.
std::vector<double> strategy_target(const StrategyConfig& cfg, const EvidenceStore& store,
                                    const TemporalEnsemble* ensemble, std::size_t i,
                                    std::size_t epoch, std::size_t total_epochs,
                                    int label);

}  // namespace bsdlab

#endif  // BSDLAB_TARGETS_HPP_
