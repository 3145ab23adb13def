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

#ifndef BSDLAB_TRAINING_HPP_
#define BSDLAB_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bsdlab/analysis.hpp"
#include "bsdlab/data.hpp"
#include "bsdlab/models.hpp"
#include "bsdlab/numerics.hpp"
#include "bsdlab/targets.hpp"

namespace bsdlab {

enum class LrSchedule { kConstant, kCosine };

// epoch is 0-based. cosine: base * (1 + cos(pi * epoch / total)) / 2.
double lr_at(LrSchedule schedule, double base, std::size_t epoch, std::size_t total);

struct BsdPlusConfig {
  bool enabled = false;
  double lambda_a = 2.0;
  std::size_t views = 2;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  LrSchedule schedule = LrSchedule::kConstant;
  StrategyConfig strategy;
  BsdPlusConfig bsd_plus;
  bool weak_augment = false;  // forced on by bsd_plus
  AugmentSpec augment;
  std::size_t eval_every = 1;
  std::size_t bins = kDefaultBins;

  void validate() const;
};

// Loss of one mini-batch with gradients:
//
//   L = 1/(|B| k) sum_i CE(target_i, p_i)
//     + lambda_a/(m |B|) sum_i sum_j KL(f(T_j x_i) || p_i)
//
// The second term is present only when strong views are supplied; the weak
// prediction p_i inside it is a constant.
struct BatchLoss {
  double total = 0.0;
  double main = 0.0;
  double contrastive = 0.0;
  Matrix probs;
  std::vector<Matrix> grads;
};

BatchLoss batch_loss(const Model& model, const Matrix& inputs, const Matrix& targets,
                     std::span<const Matrix> strong_views, double lambda_a, Rng* rng);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

// lambda_a/(m |B|) sum_i sum_j KL(f(view_j,i) || anchor_i); anchor rows are
// treated as constants.
ContrastiveResult contrastive_term(const Model& model, std::span<const Matrix> strong_views,
                                   const Matrix& anchor, double lambda_a, Rng* rng);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;   // mean soft cross-entropy per sample
  double train_kl = 0.0;     // mean KL(target || prediction)
  double contrastive = 0.0;  // mean contrastive term per batch
  double mean_target_entropy = 0.0;
  double mean_evidence = 0.0;
};

// Single training run. Every random draw comes from streams derived from the
// run seed and the (epoch, batch, sample, view) position, so the state at an
// epoch boundary is fully described by parameters, optimizer moments and
// strategy state.
class Trainer {
 public:
  Trainer(const ModelSpec& spec, TrainConfig cfg, Dataset train, std::uint64_t seed);

  // Runs the next epoch. Fails if all configured epochs are done.
  EpochStats train_epoch();

  std::size_t epochs_completed() const noexcept { return epoch_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  const Dataset& train_set() const noexcept { return train_; }
  std::uint64_t seed() const noexcept { return seed_; }

  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }
  const TargetStrategy& strategy() const noexcept { return strategy_; }
  TargetStrategy& strategy() noexcept { return strategy_; }
  const OptimizerState& optimizer() const noexcept { return optimizer_; }

  // Resumable state at an epoch boundary (checkpoint container, kind "training").
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

  // Test hook, called after the forward pass of each batch with the batch ids.
  std::function<void(TargetStrategy&, std::span<const std::size_t>)> after_forward;

 private:
  Matrix batch_inputs(std::span<const std::size_t> ids) const;

  Model model_;
  TrainConfig cfg_;
  Dataset train_;
  std::uint64_t seed_;
  TargetStrategy strategy_;
  OptimizerState optimizer_;
  std::size_t epoch_ = 0;
};

// Eval-mode probabilities for every sample.
Matrix evaluate(const Model& model, const Matrix& samples);

// Perturbation sequences: frame f of sample i is x_i + f * step * n_i with a
// fixed per-sample Gaussian direction n_i. Returns argmax per frame.
std::vector<std::vector<std::size_t>> flip_sequences(const Model& model, const Matrix& samples,
                                                     std::size_t frames, double step,
                                                     std::uint64_t seed);

struct EvalMetrics {
  double accuracy = 0.0;
  double ece = 0.0;
  double nll = 0.0;
};

struct EpochRecord {
  EpochStats stats;
  std::optional<EvalMetrics> eval;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string run_id;
  std::size_t classes = 0;
  std::string config_text;
  std::vector<EpochRecord> epochs;
  CalibrationReport final_report;
  double wall_seconds = 0.0;  // reported on stdout only, never persisted
};

struct ExperimentSetup {
  std::string run_id = "run";
  ModelSpec model;  // seed is re-derived per run seed
  TrainConfig train;
  Dataset train_set;
  Dataset test_set;
  std::optional<Dataset> ood_set;
  std::size_t trace_every = 5;  // 0 disables per-epoch prediction traces
  std::size_t flip_frames = 0;  // 0 disables perturbation sequences
  double flip_step = 0.05;
  std::size_t checkpoint_every = 0;  // 0: state saved only after the last epoch
  bool resume = false;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path run_dir;  // empty: nothing is written
  std::string config_text;
  std::size_t threads = 1;
  std::function<void(const std::string&)> progress;
};

inline constexpr const char* kRunRecordSchema = "bsdlab.run_record";
inline constexpr int kRunRecordVersion = 1;

// Trains one run per seed. With a run directory, writes
//   records/seed-<s>.jsonl         header, one object per epoch, final summary
//   records/store-seed-<s>.csv     final strategy state
//   checkpoints/seed-<s>.ckpt      final model
//   checkpoints/seed-<s>-state.ckpt resumable training state
//   traces/seed-<s>/epoch-<t>.csv  test predictions (sample_id,label,p_0..)
//   traces/seed-<s>/ood-final.csv  when an OOD set is configured
//   traces/seed-<s>/flip-final.csv when flip_frames > 0
std::vector<RunRecord> run_experiment(const ExperimentSetup& setup);

// Parses records/seed-<s>.jsonl. Fails on an unknown schema or version.
RunRecord read_run_record(const std::filesystem::path& path);

// Per-seed model seed used by run_experiment.
std::uint64_t model_seed_for(std::uint64_t run_seed);

// Trace CSV helpers shared with the analysis commands.
void write_trace(const std::filesystem::path& path, const Matrix& probs,
                 std::span<const int> labels);
struct Trace {
  std::vector<int> labels;
  Matrix probs;
};
Trace read_trace(const std::filesystem::path& path);

void write_flip_trace(const std::filesystem::path& path,
                      const std::vector<std::vector<std::size_t>>& sequences);
std::vector<std::vector<std::size_t>> read_flip_trace(const std::filesystem::path& path);

}  // namespace bsdlab

#endif  // BSDLAB_TRAINING_HPP_
