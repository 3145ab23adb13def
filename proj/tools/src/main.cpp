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

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bsdlab/cli/commands.hpp"
#include "bsdlab/cli/config.hpp"

namespace {

std::string key_listing() {
  std::string out = "config keys:\n";
  for (const auto& k : bsdlab::cli::config_keys()) out += "  " + k.key + "  " + k.help + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bsdlab::cli;
  CLI::App app{"bsdlab: self-distillation training lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "bsdlab 0.1.0");

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train every seed of a config");
  train_cmd->add_option("config", train.config, "config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--set", train.overrides, "override a config key (key=value)");
  train_cmd->add_flag("--force", train.force, "replace an existing run directory");
  train_cmd->add_flag("--dry-run", train.dry_run, "validate and print the resolved config");
  train_cmd->add_flag("--resume", train.resume, "continue from saved training state");
  train_cmd->footer(key_listing());

  AnalyzeOptions analyze;
  std::uint64_t seed = 0;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "write analysis reports for a run");
  analyze_cmd->add_option("run_dir", analyze.run_dir, "run directory")->required();
  analyze_cmd->add_option("what", analyze.what, "analysis")
      ->required()
      ->check(CLI::IsMember(kAnalyses));
  CLI::Option* seed_opt = analyze_cmd->add_option("--seed", seed, "only this seed");
  analyze_cmd->add_flag("--force", analyze.force, "overwrite existing reports");

  CompareOptions compare;
  CLI::App* compare_cmd = app.add_subcommand("compare", "tabulate mean +- std over seeds");
  compare_cmd->add_option("runs", compare.runs, "run directories")->required();
  compare_cmd->add_option("--out", compare.csv, "CSV output path")->capture_default_str();

  ExportOptions exp;
  CLI::App* export_cmd = app.add_subcommand("export-dataset", "write the configured splits");
  export_cmd->add_option("config", exp.config, "config file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--out", exp.out_dir, "output directory")->required();
  export_cmd->add_option("--format", exp.format, "csv or idx")
      ->capture_default_str()
      ->check(CLI::IsMember({"csv", "idx"}));
  export_cmd->add_option("--set", exp.overrides, "override a config key (key=value)");
  export_cmd->add_flag("--force", exp.force, "overwrite existing files");

  CLI11_PARSE(app, argc, argv);

  if (*train_cmd) return cmd_train(train, std::cout, std::cerr);
  if (*analyze_cmd) {
    if (*seed_opt) analyze.seed = seed;
    return cmd_analyze(analyze, std::cout, std::cerr);
  }
  if (*compare_cmd) return cmd_compare(compare, std::cout, std::cerr);
  if (*export_cmd) return cmd_export_dataset(exp, std::cout, std::cerr);
  return 2;
}
