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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bsdlab/cli/commands.hpp"
#include "bsdlab/cli/config.hpp"
#include "oracles.hpp"

namespace bsdlab::cli {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bsdlab-cli-test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& body) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << body;
  return p;
}

std::string tiny_config(const fs::path& out, const std::string& extra = "") {
  return "run_id = tiny\noutput_dir = " + out.string() +
         "\nseeds = 1,2,3\ndataset = blobs\nclasses = 3\nper_class = 20\ntest_per_class = 10\n"
         "hidden = 8\nepochs = 3\nbatch_size = 16\nmode = bsd\ntrace_every = 1\n" + extra;
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, MinimalConfigEchoesDefaults) {
  const ExperimentConfig cfg = parse_config_text("dataset = blobs\nmode = bsd\n");
  EXPECT_EQ(cfg.train.strategy.gamma, 0.95);
  EXPECT_EQ(cfg.train.strategy.c, 1000.0);
  EXPECT_EQ(cfg.train.strategy.epsilon, 0.0);
  const std::string text = serialize_config(cfg);
  EXPECT_EQ(text.rfind("# bsdlab resolved config\n", 0), 0u);
  for (const char* line : {"\ngamma = 0.95\n", "\nc = 1000\n", "\nepsilon = 0\n", "\nmode = bsd\n",
                           "\ntau = 1\n"}) {
    EXPECT_NE(text.find(line), std::string::npos) << line;
  }
  for (const KeyInfo& k : config_keys()) {
    EXPECT_NE(text.find("\n" + k.key + " = "), std::string::npos) << k.key;
  }
}

TEST(Config, GammaOutOfRange) {
  try {
    parse_config_text("gamma = 1.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "gamma");
    EXPECT_NE(std::string(e.what()).find("gamma must be in [0,1]"), std::string::npos);
  }
}

TEST(Config, UnknownKeySuggestsClosest) {
  try {
    parse_config_text("gama = 0.9\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "gama");
    EXPECT_NE(std::string(e.what()).find("did you mean 'gamma'"), std::string::npos);
  }
  EXPECT_EQ(suggest_key("epocs"), "epochs");
  EXPECT_EQ(suggest_key("completely_unrelated_key"), "");
}

TEST(Config, ErrorsNameTheKey) {
  EXPECT_NE(config_error("epochs = ten\n").find("epochs"), std::string::npos);
  EXPECT_NE(config_error("mode = bdd\n").find("mode"), std::string::npos);
  EXPECT_NE(config_error("seeds = 1,1\n").find("seeds"), std::string::npos);
  EXPECT_NE(config_error("gamma = 0.5\ngamma = 0.6\n").find("duplicate"), std::string::npos);
  EXPECT_NE(config_error("just text\n").find("key = value"), std::string::npos);
  EXPECT_NE(config_error("mode = dlb\ngranularity = epoch\n").find("mini-batch"),
            std::string::npos);
  EXPECT_NE(config_error("lr = -1\n").find("lr"), std::string::npos);
}

TEST(Config, MissingDataPathIsError) {
  try {
    parse_config_text("dataset = csv\ntrain_csv = /nonexistent/train.csv\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "train_csv");
    EXPECT_NE(std::string(e.what()).find("/nonexistent/train.csv"), std::string::npos);
  }
}

TEST(Config, RoundTripIsIdentical) {
  std::mt19937_64 rng(3);
  const std::vector<std::string> texts = {
      "dataset = blobs\nmode = bsd\n",
      "mode = ps-kd\npskd_alpha = 0.7\noptimizer = sgd\nlr = 0.123456789\nschedule = cosine\n",
      "mode = dlb\nnoise = asymmetric\nnoise_rate = 0.3\nnoise_map = 1,0,3,2\nbsd_plus = true\n"
      "lambda_a = 1.5\nviews = 3\nood = shifted\nood_shift = 7.25\nseeds = 4,9\n",
      "mode = te\nte_momentum = 0.7\nhidden = 5,6,7\nactivation = tanh\ndropout = 0.1\n"
      "epsilon = 0.001\ntau = 0.5\nspread = 0.1\n"};
  for (const std::string& t : texts) {
    const std::string once = serialize_config(parse_config_text(t));
    const std::string twice = serialize_config(parse_config_text(once));
    EXPECT_EQ(once, twice);
  }
}

TEST(Config, OverrideAndOutputRootEnv) {
  ExperimentConfig cfg = parse_config_text("output_dir = somewhere\nrun_id = r\n");
  apply_override(cfg, "gamma=0.9");
  EXPECT_EQ(cfg.train.strategy.gamma, 0.9);
  EXPECT_THROW(apply_override(cfg, "gamma"), ConfigError);
  EXPECT_THROW(apply_override(cfg, "gama=0.9"), ConfigError);
  EXPECT_EQ(run_directory(cfg), fs::path("somewhere") / "r");
  ::setenv("BSDLAB_OUTPUT_ROOT", "/tmp/elsewhere", 1);
  EXPECT_EQ(output_root(cfg), fs::path("/tmp/elsewhere"));
  EXPECT_EQ(run_directory(cfg), fs::path("/tmp/elsewhere") / "r");
  ::unsetenv("BSDLAB_OUTPUT_ROOT");
  EXPECT_EQ(output_root(cfg), fs::path("somewhere"));
}

TEST(Config, RelativeDataPathsAnchoredAtConfigFile) {
  const fs::path dir = fresh_dir("anchor");
  BlobSpec b;
  b.classes = 2;
  b.per_class = 3;
  write_csv(make_blobs(b), dir / "train.csv");
  write_csv(make_blobs(b), dir / "test.csv");
  const fs::path cfg_path =
      write_config(dir, "dataset = csv\ntrain_csv = train.csv\ntest_csv = test.csv\n");
  const ExperimentConfig cfg = parse_config(cfg_path);
  EXPECT_EQ(cfg.data.train_csv, (dir / "train.csv").lexically_normal());
  const Splits s = build_splits(cfg);
  EXPECT_EQ(s.train.size(), 6u);
}

TEST(Train, DryRunPrintsResolvedConfigOnly) {
  const fs::path dir = fresh_dir("dry");
  const fs::path cfg = write_config(dir, tiny_config(dir / "out"));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train({cfg, {}, false, true, false}, out, err), 0);
  EXPECT_EQ(out.str(), serialize_config(parse_config(cfg)));
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Train, ThreeSeedsThenRefuseRerun) {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_config(dir, tiny_config(dir / "out"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train({cfg, {}, false, false, false}, out, err), 0) << err.str();
  const fs::path run = dir / "out" / "tiny";
  EXPECT_EQ(run_seeds(run), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(slurp(run / "config.resolved"), serialize_config(parse_config(cfg)));
  EXPECT_NE(out.str().find("seed 2 epoch 3/3 loss"), std::string::npos);
  EXPECT_NE(out.str().find("acc "), std::string::npos);
  EXPECT_NE(out.str().find("ece "), std::string::npos);
  EXPECT_EQ(epoch_traces(run, 1).size(), 3u);

  const std::string before = slurp(run / "records" / "seed-1.jsonl");
  std::ostringstream out2, err2;
  EXPECT_NE(cmd_train({cfg, {}, false, false, false}, out2, err2), 0);
  EXPECT_NE(err2.str().find("--force"), std::string::npos);
  EXPECT_EQ(slurp(run / "records" / "seed-1.jsonl"), before);

  std::ostringstream out3, err3;
  EXPECT_EQ(cmd_train({cfg, {}, true, false, false}, out3, err3), 0) << err3.str();
  EXPECT_EQ(slurp(run / "records" / "seed-1.jsonl"), before);

  std::ostringstream out4, err4;
  EXPECT_NE(cmd_train({cfg, {"gamma=0.9"}, false, false, true}, out4, err4), 0);
  EXPECT_NE(err4.str().find("config.resolved differs"), std::string::npos);
}

// Hand-built run directory holding one trace.
fs::path fixture_run(const std::string& name, const Matrix& probs, const std::vector<int>& labels) {
  const fs::path run = fresh_dir(name);
  fs::create_directories(run / "records");
  std::ofstream(run / "records" / "seed-1.jsonl") << "{}\n";
  write_trace(run / "traces" / "seed-1" / "epoch-3.csv", probs, labels);
  return run;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) cells.push_back(c);
  return cells;
}

TEST(Analyze, PerfectPredictionsGiveZeroErrors) {
  const std::vector<int> labels = {0, 1, 2, 1};
  Matrix p(4, 3);
  for (std::size_t i = 0; i < 4; ++i) p(i, static_cast<std::size_t>(labels[i])) = 1.0;
  const fs::path run = fixture_run("perfect", p, labels);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_analyze({run, "calibration", std::nullopt, false}, out, err), 0) << err.str();
  std::ifstream csv(run / "reports" / "calibration.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "seed,epoch,accuracy,ece,sce,ace,nll");
  EXPECT_EQ(row, "1,3,1,0,0,0,0");
  EXPECT_TRUE(fs::exists(run / "reports" / "calibration-seed-1.json"));
  EXPECT_TRUE(fs::exists(run / "reports" / "reliability-seed-1.csv"));

  std::ostringstream out2, err2;
  EXPECT_NE(cmd_analyze({run, "calibration", std::nullopt, false}, out2, err2), 0);
  EXPECT_NE(err2.str().find("--force"), std::string::npos);
  std::ostringstream out3, err3;
  EXPECT_EQ(cmd_analyze({run, "calibration", std::nullopt, true}, out3, err3), 0);
}

TEST(Analyze, DarkKnowledgeGivesSymmetricMatrix) {
  std::mt19937_64 rng(4);
  Matrix p(30, 3);
  std::vector<int> labels(30);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto r = oracle::random_simplex(rng, 3);
    std::copy(r.begin(), r.end(), p.row(i).begin());
    labels[i] = static_cast<int>(i % 3);
  }
  const fs::path run = fixture_run("dk", p, labels);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_analyze({run, "dark-knowledge", std::nullopt, false}, out, err), 0) << err.str();
  std::ifstream csv(run / "reports" / "mu-seed-1.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "class,mu_0,mu_1,mu_2");
  std::vector<std::vector<std::string>> cells;
  while (std::getline(csv, line)) cells.push_back(split_line(line));
  ASSERT_EQ(cells.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_EQ(cells[i].size(), 4u);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(cells[i][j + 1], cells[j][i + 1]);
  }
  EXPECT_NE(out.str().find("mu row sums"), std::string::npos);
  EXPECT_TRUE(fs::exists(run / "reports" / "delta-seed-1.csv"));
}

TEST(Analyze, MissingArtifactsNameFileAndFlag) {
  const Matrix p(3, 2, 0.5);
  const std::vector<int> labels = {0, 1, 0};
  const fs::path run = fixture_run("missing", p, labels);
  std::ostringstream out, err;
  EXPECT_NE(cmd_analyze({run, "ood", std::nullopt, false}, out, err), 0);
  EXPECT_NE(err.str().find("two trace sets"), std::string::npos);
  EXPECT_NE(err.str().find("ood-final.csv"), std::string::npos);
  EXPECT_NE(err.str().find("ood = "), std::string::npos);

  std::ostringstream o2, e2;
  EXPECT_NE(cmd_analyze({run, "flip", std::nullopt, false}, o2, e2), 0);
  EXPECT_NE(e2.str().find("flip_frames"), std::string::npos);

  std::ostringstream o3, e3;
  EXPECT_NE(cmd_analyze({run, "dynamics", std::nullopt, false}, o3, e3), 0);
  EXPECT_NE(e3.str().find("trace_every"), std::string::npos);

  std::ostringstream o4, e4;
  EXPECT_NE(cmd_analyze({run, "calibration", 7, false}, o4, e4), 0);
  std::ostringstream o5, e5;
  EXPECT_NE(cmd_analyze({run, "nonsense", std::nullopt, false}, o5, e5), 0);
  std::ostringstream o6, e6;
  EXPECT_NE(cmd_analyze({run / "nope", "calibration", std::nullopt, false}, o6, e6), 0);
}

TEST(Analyze, FullRunAllAnalyses) {
  const fs::path dir = fresh_dir("full");
  const fs::path cfg = write_config(
      dir, tiny_config(dir / "out", "ood = uniform\nood_size = 20\nflip_frames = 4\n"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train({cfg, {}, false, false, false}, out, err), 0) << err.str();
  const fs::path run = dir / "out" / "tiny";
  for (const std::string& what : kAnalyses) {
    std::ostringstream o, e;
    EXPECT_EQ(cmd_analyze({run, what, std::nullopt, false}, o, e), 0) << what << ": " << e.str();
  }
  for (const char* f : {"calibration.csv", "mu-seed-2.csv", "dynamics-seed-3.csv", "ood.csv",
                        "flip.csv"}) {
    EXPECT_TRUE(fs::exists(run / "reports" / f)) << f;
  }
}

void write_record(const fs::path& run, std::uint64_t seed, std::size_t classes,
                  const std::string& final_line) {
  fs::create_directories(run / "records");
  std::ofstream out(run / "records" / ("seed-" + std::to_string(seed) + ".jsonl"));
  out << R"({"classes":)" << classes << R"(,"config":"mode = bsd\n","run_id":")"
      << run.filename().string() << R"(","schema":"bsdlab.run_record","seed":)" << seed
      << R"(,"type":"header","version":1})" << '\n'
      << final_line << '\n';
}

const std::string kFinal =
    R"({"type":"final","test_accuracy":0.9,"test_ece":0.05,"test_nll":0.3})";

TEST(Compare, IdenticalRunsGiveIdenticalColumns) {
  const fs::path root = fresh_dir("compare");
  for (const char* name : {"a", "b"}) {
    write_record(root / name, 1, 3, kFinal);
    write_record(root / name, 2, 3, kFinal);
  }
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare({{root / "a", root / "b"}, root / "cmp.csv"}, out, err), 0) << err.str();
  std::ifstream csv(root / "cmp.csv");
  std::string header, ra, rb;
  std::getline(csv, header);
  std::getline(csv, ra);
  std::getline(csv, rb);
  EXPECT_EQ(header, "method,run,seeds,accuracy_mean,accuracy_std,ece_mean,ece_std,nll_mean,nll_std");
  EXPECT_EQ(ra.substr(ra.find(",a,") + 3), rb.substr(rb.find(",b,") + 3));
  EXPECT_EQ(ra, "bsd,a,2,0.90000000000000002,0,0.050000000000000003,0,0.29999999999999999,0");
  EXPECT_EQ(err.str(), "");
  EXPECT_NE(out.str().find("0.9000 +- 0.0000"), std::string::npos);
}

TEST(Compare, SingleSeedWarnsAndMissingMetricIsAbsent) {
  const fs::path root = fresh_dir("compare-absent");
  write_record(root / "a", 1, 3, kFinal);
  write_record(root / "b", 1, 3, R"({"type":"final","test_accuracy":0.8,"test_ece":0.1})");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_compare({{root / "a", root / "b"}, root / "cmp.csv"}, out, err), 0) << err.str();
  EXPECT_NE(err.str().find("single seed"), std::string::npos);
  const std::string csv = slurp(root / "cmp.csv");
  EXPECT_NE(csv.find("bsd,b,1,0.80000000000000004,0,0.10000000000000001,0,absent,absent"),
            std::string::npos);
  EXPECT_NE(out.str().find("absent"), std::string::npos);
}

TEST(Compare, Errors) {
  const fs::path root = fresh_dir("compare-errors");
  write_record(root / "a", 1, 3, kFinal);
  write_record(root / "b", 1, 4, kFinal);
  std::ostringstream out, err;
  EXPECT_NE(cmd_compare({{root / "a", root / "b"}, root / "cmp.csv"}, out, err), 0);
  EXPECT_NE(err.str().find("incompatible"), std::string::npos);
  std::ostringstream o2, e2;
  EXPECT_NE(cmd_compare({{root / "a"}, root / "cmp.csv"}, o2, e2), 0);
}

TEST(ExportDataset, CsvAndIdxRoundTrip) {
  const fs::path dir = fresh_dir("export");
  const fs::path cfg = write_config(
      dir, "dataset = blobs\nclasses = 3\nper_class = 7\ntest_per_class = 4\n"
           "noise = symmetric\nnoise_rate = 0.25\nnoise_seed = 3\n");
  const Splits want = build_splits(parse_config(cfg));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_export_dataset({cfg, {}, dir / "csv", "csv", false}, out, err), 0) << err.str();
  const Dataset train = load_csv(dir / "csv" / "train.csv");
  EXPECT_EQ(train.samples, want.train.samples);
  EXPECT_EQ(train.labels, want.train.labels);
  EXPECT_EQ(train.clean_labels, want.train.clean_labels);
  EXPECT_EQ(load_csv(dir / "csv" / "test.csv").samples, want.test.samples);

  ASSERT_EQ(cmd_export_dataset({cfg, {}, dir / "idx", "idx", false}, out, err), 0) << err.str();
  const Dataset back = load_idx(dir / "idx" / "train-images.idx", dir / "idx" / "train-labels.idx");
  EXPECT_EQ(back.samples, want.train.samples);
  EXPECT_EQ(back.labels, want.train.labels);

  std::ostringstream o2, e2;
  EXPECT_NE(cmd_export_dataset({cfg, {}, dir / "csv", "csv", false}, o2, e2), 0);
  EXPECT_NE(e2.str().find("--force"), std::string::npos);
  std::ostringstream o3, e3;
  EXPECT_NE(cmd_export_dataset({cfg, {}, dir / "x", "parquet", false}, o3, e3), 0);
}

}  // namespace
}  // namespace bsdlab::cli
