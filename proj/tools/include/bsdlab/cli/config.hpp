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

#ifndef BSDLAB_CLI_CONFIG_HPP_
#define BSDLAB_CLI_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bsdlab/data.hpp"
#include "bsdlab/error.hpp"
#include "bsdlab/models.hpp"
#include "bsdlab/training.hpp"

namespace bsdlab::cli {

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what) : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class DatasetKind { kBlobs, kIdx, kCsv };
enum class OodKind { kNone, kUniform, kShifted };

struct DataConfig {
  DatasetKind kind = DatasetKind::kBlobs;
  BlobSpec blobs{4, 1000, 2, 3.0, 1.0, 0, {}};
  std::size_t test_per_class = 250;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  std::string label_column = "label";
  std::size_t classes = 0;  // idx/csv: 0 = infer
};

struct ExperimentConfig {
  std::string run_id = "run";
  std::filesystem::path output_dir = "runs";
  std::vector<std::uint64_t> seeds = {1};
  std::size_t threads = 1;

  DataConfig data;
  NoiseSpec noise;
  bool cyclic_noise_map = true;  // asymmetric noise: c -> c+1 mod k unless noise_map is given

  OodKind ood = OodKind::kNone;
  std::size_t ood_size = 1000;
  double ood_shift = 10.0;
  std::uint64_t ood_seed = 0;

  Architecture arch = Architecture::kMlp;
  std::vector<std::size_t> hidden = {32, 32};
  Activation activation = Activation::kRelu;
  double dropout = 0.0;

  TrainConfig train;
  bool granularity_default = true;

  std::size_t trace_every = 5;
  std::size_t flip_frames = 0;
  double flip_step = 0.05;
  std::size_t checkpoint_every = 0;
};

struct KeyInfo {
  std::string key;
  std::string help;
};

// Every accepted key, in serialization order.
const std::vector<KeyInfo>& config_keys();

// Parses "key = value" lines; '#' starts a comment. Unknown keys, malformed
// values and constraint violations raise ConfigError naming the key.
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "config");
ExperimentConfig parse_config(const std::filesystem::path& path);

// Applies one "key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Resolved config with every key and default.
std::string serialize_config(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

// Closest accepted key within edit distance 3, or empty.
std::string suggest_key(const std::string& unknown);

// Output root after the BSDLAB_OUTPUT_ROOT override.
std::filesystem::path output_root(const ExperimentConfig& cfg);
std::filesystem::path run_directory(const ExperimentConfig& cfg);

struct Splits {
  Dataset train;
  Dataset test;
  std::optional<Dataset> ood;
};

Splits build_splits(const ExperimentConfig& cfg);
ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& train);
ExperimentSetup make_setup(const ExperimentConfig& cfg);

}  // namespace bsdlab::cli

#endif  // BSDLAB_CLI_CONFIG_HPP_
