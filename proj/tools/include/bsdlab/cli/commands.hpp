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

#ifndef BSDLAB_CLI_COMMANDS_HPP_
#define BSDLAB_CLI_COMMANDS_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace bsdlab::cli {

// Commands return a process exit code and report errors on `err`.

struct TrainOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;  // key=value
  bool force = false;
  bool dry_run = false;
  bool resume = false;
};

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);

inline const std::vector<std::string> kAnalyses = {"calibration", "dark-knowledge", "dynamics",
                                                   "ood", "flip"};

struct AnalyzeOptions {
  std::filesystem::path run_dir;
  std::string what;
  std::optional<std::uint64_t> seed;  // default: every seed in the run
  bool force = false;
};

int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err);

struct CompareOptions {
  std::vector<std::filesystem::path> runs;
  std::filesystem::path csv = "compare.csv";
};

int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err);

struct ExportOptions {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::filesystem::path out_dir;
  std::string format = "csv";  // csv or idx
  bool force = false;
};

int cmd_export_dataset(const ExportOptions& opts, std::ostream& out, std::ostream& err);

// Seeds with a record file under <run_dir>/records, ascending.
std::vector<std::uint64_t> run_seeds(const std::filesystem::path& run_dir);

// Prediction traces of one seed as (epoch, path), ascending by epoch.
std::vector<std::pair<std::size_t, std::filesystem::path>> epoch_traces(
    const std::filesystem::path& run_dir, std::uint64_t seed);

}  // namespace bsdlab::cli

#endif  // BSDLAB_CLI_COMMANDS_HPP_
