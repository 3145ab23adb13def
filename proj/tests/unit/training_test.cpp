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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "bsdlab/error.hpp"
#include "bsdlab/training.hpp"
#include "oracles.hpp"

namespace bsdlab {
namespace {

namespace fs = std::filesystem;

Dataset small_blobs(std::size_t per_class = 20, std::uint64_t seed = 1, std::size_t k = 3) {
  BlobSpec b;
  b.classes = k;
  b.per_class = per_class;
  b.spacing = 2.0;
  b.seed = seed;
  return make_blobs(b);
}

ModelSpec small_mlp(std::size_t k = 3, std::vector<std::size_t> hidden = {8}) {
  ModelSpec s;
  s.input_dim = 2;
  s.classes = k;
  s.hidden = std::move(hidden);
  s.seed = 5;
  return s;
}

TrainConfig sgd_config(StrategyMode mode, std::size_t epochs = 5) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.optimizer.kind = OptimizerKind::kSgdMomentum;
  cfg.optimizer.lr = 0.1;
  cfg.strategy.mode = mode;
  cfg.strategy.granularity = StrategyConfig::default_granularity(mode);
  return cfg;
}

std::vector<double> span_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "bsdlab-training-test" / name;
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

TEST(LrAt, Examples) {
  EXPECT_EQ(lr_at(LrSchedule::kCosine, 0.4, 0, 10), 0.4);
  EXPECT_NEAR(lr_at(LrSchedule::kCosine, 0.4, 5, 10), 0.2, 1e-15);
  for (std::size_t e : {0u, 3u, 9u}) EXPECT_EQ(lr_at(LrSchedule::kConstant, 0.4, e, 10), 0.4);
  EXPECT_THROW(lr_at(LrSchedule::kConstant, 0.4, 0, 0), Error);
}

TEST(TrainConfigValidate, Rejects) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.bsd_plus.enabled = true;
  cfg.bsd_plus.views = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.strategy.tau = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.optimizer.lr = -1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(TrainEpoch, BaselineLossDecreasesOnSeparablePair) {
  Dataset d;
  d.classes = 2;
  d.samples = Matrix(2, 2, std::vector<double>{1.0, 0.0, -1.0, 0.0});
  d.labels = d.clean_labels = {0, 1};
  ModelSpec spec;
  spec.input_dim = 2;
  spec.classes = 2;
  spec.seed = 3;
  TrainConfig cfg = sgd_config(StrategyMode::kBaseline, 3);
  cfg.batch_size = 2;
  cfg.optimizer.momentum = 0.0;
  Trainer t(spec, cfg, d, 1);
  const double l1 = t.train_epoch().train_loss;
  const double l2 = t.train_epoch().train_loss;
  const double l3 = t.train_epoch().train_loss;
  EXPECT_LT(l2, l1);
  EXPECT_LT(l3, l2);
}

TEST(TrainEpoch, BsdMassAfterFirstEpoch) {
  Trainer t(small_mlp(), sgd_config(StrategyMode::kBsd), small_blobs(), 2);
  const EpochStats s = t.train_epoch();
  EXPECT_EQ(s.epoch, 1u);
  for (double a : t.strategy().store().masses()) EXPECT_EQ(a, 0.95 * 1000.0 + 1.0);
  EXPECT_EQ(s.mean_evidence, 951.0);
}

TEST(TrainEpoch, FrozenModelTargetsConvergeGeometrically) {
  TrainConfig cfg = sgd_config(StrategyMode::kBsd, 30);
  cfg.optimizer.lr = 0.0;
  cfg.strategy.c = 3.0;
  cfg.strategy.gamma = 0.8;
  const Dataset d = small_blobs(5);
  Trainer t(small_mlp(), cfg, d, 3);
  const Matrix frozen = evaluate(t.model(), d.samples);
  const EvidenceStore& store = t.strategy().store();
  std::vector<double> gap(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    gap[i] = oracle::sum([&] {
      std::vector<double> v(3);
      for (std::size_t j = 0; j < 3; ++j) v[j] = std::abs(store.target(i)[j] - frozen(i, j));
      return v;
    }());
  }
  for (int e = 0; e < 30; ++e) {
    std::vector<double> w(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) w[i] = store.history_weight(i);
    t.train_epoch();
    for (std::size_t i = 0; i < d.size(); ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < 3; ++j) g += std::abs(store.target(i)[j] - frozen(i, j));
      EXPECT_NEAR(g, w[i] * gap[i], 1e-12);
      gap[i] = g;
    }
  }
  for (double g : gap) EXPECT_LT(g, 1e-2);
}

TEST(TrainEpoch, BaselineStoreNeverModified) {
  Trainer t(small_mlp(), sgd_config(StrategyMode::kBaseline), small_blobs(), 4);
  const Matrix y = t.strategy().store().targets();
  const std::vector<double> a = t.strategy().store().masses();
  for (int e = 0; e < 3; ++e) {
    const EpochStats s = t.train_epoch();
    EXPECT_EQ(s.mean_target_entropy, 0.0);
  }
  EXPECT_EQ(t.strategy().store().targets(), y);
  EXPECT_EQ(t.strategy().store().masses(), a);
}

TEST(TrainEpoch, BsdTargetEntropyPositiveAfterEpochTwo) {
  Trainer bsd(small_mlp(), sgd_config(StrategyMode::kBsd), small_blobs(), 4);
  Trainer base(small_mlp(), sgd_config(StrategyMode::kBaseline), small_blobs(), 4);
  bsd.train_epoch();
  base.train_epoch();
  EXPECT_GT(bsd.train_epoch().mean_target_entropy, 0.0);
  EXPECT_EQ(base.train_epoch().mean_target_entropy, 0.0);
}

// Gamma = 1 is pure conjugate accumulation; predictions come from replaying the
// forward pass inside the post-forward hook, before the optimizer touches the
// parameters.
TEST(TrainEpoch, GammaOneAccumulatesEvidence) {
  TrainConfig cfg = sgd_config(StrategyMode::kBsd, 6);
  cfg.strategy.gamma = 1.0;
  cfg.strategy.c = 4.0;
  cfg.strategy.epsilon = 0.5;
  const Dataset d = small_blobs(6);
  Trainer t(small_mlp(), cfg, d, 9);
  std::vector<std::vector<double>> alpha(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    alpha[i] = std::vector<double>(3, 0.5);
    alpha[i][static_cast<std::size_t>(d.labels[i])] = 4.0;
  }
  t.after_forward = [&](TargetStrategy&, std::span<const std::size_t> ids) {
    const Matrix p = forward(t.model(), gather_rows(d.samples, ids), nullptr).probs;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      alpha[ids[r]] = oracle::conjugate_update(alpha[ids[r]], span_vec(p.row(r)), 1.0);
    }
  };
  for (int e = 0; e < 6; ++e) t.train_epoch();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto want = oracle::normalize(alpha[i]);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(t.strategy().store().target(i)[j], want[j], 1e-12);
    EXPECT_NEAR(t.strategy().store().mass(i), 5.0 + 6.0, 1e-12);
  }
}

TEST(TrainEpoch, PerturbingStoreAfterForwardDoesNotChangeUpdate) {
  for (StrategyMode mode : {StrategyMode::kBsd, StrategyMode::kDlb}) {
    Trainer plain(small_mlp(), sgd_config(mode), small_blobs(), 6);
    Trainer poked(small_mlp(), sgd_config(mode), small_blobs(), 6);
    poked.after_forward = [](TargetStrategy& s, std::span<const std::size_t> ids) {
      for (std::size_t i : ids) {
        const std::vector<double> junk = {0.2, 0.3, 0.5};
        s.mutable_store().set_row(i, junk, 3.0);
      }
    };
    plain.train_epoch();
    poked.train_epoch();
    const auto a = plain.model().params();
    const auto b = poked.model().params();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
}

TEST(TrainEpoch, StoreRowsUnchangedUntilAfterTheStep) {
  Trainer t(small_mlp(), sgd_config(StrategyMode::kDlb), small_blobs(), 7);
  t.train_epoch();
  const Matrix at_start = t.strategy().store().targets();
  std::size_t checked = 0;
  t.after_forward = [&](TargetStrategy& s, std::span<const std::size_t> ids) {
    for (std::size_t i : ids) {
      EXPECT_EQ(span_vec(s.store().target(i)), span_vec(at_start.row(i)));
      ++checked;
    }
  };
  t.train_epoch();
  EXPECT_EQ(checked, 60u);
  EXPECT_NE(t.strategy().store().targets(), at_start);
}

TEST(TrainEpoch, NonFiniteLossAborts) {
  Trainer t(small_mlp(), sgd_config(StrategyMode::kBsd), small_blobs(), 8);
  t.model().mutable_params().back()(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    t.train_epoch();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at epoch 1"), std::string::npos) << e.what();
  }
}

TEST(TrainEpoch, MisalignedSizesRejected) {
  Dataset d = small_blobs();
  d.labels.pop_back();
  EXPECT_THROW(Trainer(small_mlp(), sgd_config(StrategyMode::kBsd), d, 1), Error);
  EXPECT_THROW(Trainer(small_mlp(4), sgd_config(StrategyMode::kBsd), small_blobs(), 1), Error);
  ModelSpec wide = small_mlp();
  wide.input_dim = 3;
  EXPECT_THROW(Trainer(wide, sgd_config(StrategyMode::kBsd), small_blobs(), 1), Error);

  const fs::path dir = fresh_dir("misaligned");
  Trainer t(small_mlp(), sgd_config(StrategyMode::kBsd), small_blobs(20), 1);
  t.train_epoch();
  t.save_state(dir / "state.ckpt");
  Trainer other(small_mlp(), sgd_config(StrategyMode::kBsd), small_blobs(10), 1);
  EXPECT_THROW(other.load_state(dir / "state.ckpt"), Error);
  Trainer mode(small_mlp(), sgd_config(StrategyMode::kBaseline), small_blobs(20), 1);
  EXPECT_THROW(mode.load_state(dir / "state.ckpt"), Error);
}

TEST(TrainEpoch, AllEpochsDone) {
  Trainer t(small_mlp(), sgd_config(StrategyMode::kBsd, 1), small_blobs(), 1);
  t.train_epoch();
  EXPECT_THROW(t.train_epoch(), Error);
}

void expect_same_state(const Trainer& a, const Trainer& b) {
  ASSERT_EQ(a.epochs_completed(), b.epochs_completed());
  for (std::size_t k = 0; k < a.model().params().size(); ++k) {
    EXPECT_EQ(a.model().params()[k], b.model().params()[k]);
  }
  EXPECT_EQ(a.strategy().store().targets(), b.strategy().store().targets());
  EXPECT_EQ(a.strategy().store().masses(), b.strategy().store().masses());
}

TEST(Resume, TrainerStateRoundTripIsExact) {
  for (StrategyMode mode : {StrategyMode::kBsd, StrategyMode::kTe, StrategyMode::kDlb}) {
    for (OptimizerKind opt : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
      TrainConfig cfg = sgd_config(mode, 6);
      cfg.optimizer.kind = opt;
      cfg.optimizer.lr = opt == OptimizerKind::kAdam ? 0.01 : 0.1;
      cfg.schedule = LrSchedule::kCosine;
      ModelSpec spec = small_mlp();
      spec.dropout = 0.2;
      Trainer full(spec, cfg, small_blobs(), 11);
      for (int e = 0; e < 6; ++e) full.train_epoch();

      const fs::path dir = fresh_dir("resume");
      Trainer first(spec, cfg, small_blobs(), 11);
      for (int e = 0; e < 3; ++e) first.train_epoch();
      first.save_state(dir / "state.ckpt");
      Trainer second(spec, cfg, small_blobs(), 11);
      second.load_state(dir / "state.ckpt");
      EXPECT_EQ(second.epochs_completed(), 3u);
      for (int e = 0; e < 3; ++e) second.train_epoch();
      expect_same_state(full, second);
    }
  }
}

TEST(Reproducibility, SameSeedBitIdentical) {
  TrainConfig cfg = sgd_config(StrategyMode::kBsd, 3);
  cfg.bsd_plus.enabled = true;
  ModelSpec spec = small_mlp();
  spec.dropout = 0.3;
  Trainer a(spec, cfg, small_blobs(), 21);
  Trainer b(spec, cfg, small_blobs(), 21);
  Trainer c(spec, cfg, small_blobs(), 22);
  for (int e = 0; e < 3; ++e) {
    a.train_epoch();
    b.train_epoch();
    c.train_epoch();
  }
  expect_same_state(a, b);
  EXPECT_NE(a.model().params()[0], c.model().params()[0]);
}

TEST(Contrastive, IdenticalViewsGiveZero) {
  const Model m = init_model(small_mlp());
  const Dataset d = small_blobs(3);
  const Matrix anchor = predict(m, d.samples);
  const std::vector<Matrix> views = {d.samples, d.samples};
  const ContrastiveResult r = contrastive_term(m, views, anchor, 2.0, nullptr);
  EXPECT_NEAR(r.loss, 0.0, 1e-15);
  for (const Matrix& g : r.grads) {
    for (double v : g.data()) EXPECT_NEAR(v, 0.0, 1e-15);
  }
}

TEST(Contrastive, ScalingByLambda) {
  // A zero linear model predicts [0.5, 0.5]; this anchor puts KL at 0.35.
  ModelSpec spec;
  spec.input_dim = 2;
  spec.classes = 2;
  const Model m(spec, {Matrix(2, 2), Matrix(1, 2)});
  const double q = (1.0 - std::sqrt(1.0 - std::exp(-0.7))) / 2.0;
  const Matrix anchor(1, 2, std::vector<double>{q, 1.0 - q});
  const std::vector<Matrix> view = {Matrix(1, 2, std::vector<double>{0.3, -0.4})};
  EXPECT_NEAR(kl_div(std::vector<double>{0.5, 0.5}, anchor.row(0)), 0.35, 1e-14);
  EXPECT_NEAR(contrastive_term(m, view, anchor, 2.0, nullptr).loss, 0.70, 1e-14);
}

TEST(Contrastive, Errors) {
  const Model m = init_model(small_mlp());
  const Matrix anchor(2, 3, 1.0 / 3.0);
  EXPECT_THROW(contrastive_term(m, {}, anchor, 1.0, nullptr), Error);
  const std::vector<Matrix> bad = {Matrix(3, 2)};
  EXPECT_THROW(contrastive_term(m, bad, anchor, 1.0, nullptr), Error);
}

// BSD+ total loss: main term with tau-sharpened targets plus the contrastive
// term, checked against central differences.
TEST(GradientCheck, FullLossWithSharpenedTargetsAndContrastive) {
  ModelSpec spec;
  spec.input_dim = 4;
  spec.classes = 3;
  spec.hidden = {8};
  spec.activation = Activation::kTanh;
  spec.seed = 12;
  const Model model = init_model(spec);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix x(5, 4);
  for (double& v : x.data()) v = n(rng);
  std::vector<Matrix> views(2, x);
  for (Matrix& v : views) {
    for (double& e : v.data()) e += 0.3 * n(rng);
  }
  Matrix t(5, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto s = sharpen(oracle::random_simplex(rng, 3), 0.5);
    std::copy(s.begin(), s.end(), t.row(i).begin());
  }
  const BatchLoss analytic = batch_loss(model, x, t, views, 2.0, nullptr);
  EXPECT_GT(analytic.contrastive, 0.0);
  // The anchor is a constant: freeze it at the unperturbed weak prediction.
  const Matrix anchor = analytic.probs;
  auto loss_at = [&](const std::vector<double>& flat) {
    Model copy = model;
    copy.set_flat_params(flat);
    const double main = batch_loss(copy, x, t, {}, 0.0, nullptr).total;
    return main + contrastive_term(copy, views, anchor, 2.0, nullptr).loss;
  };
  std::vector<double> ga;
  for (const Matrix& g : analytic.grads) ga.insert(ga.end(), g.data().begin(), g.data().end());
  const auto gn = oracle::central_diff(loss_at, model.flat_params(), 1e-5);
  EXPECT_LT(oracle::max_rel_error(ga, gn), 1e-4);
}

TEST(BatchLoss, MainTermMatchesDefinition) {
  const Model m = init_model(small_mlp());
  const Dataset d = small_blobs(2);
  std::mt19937_64 rng(4);
  Matrix t(d.size(), 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto s = oracle::random_simplex(rng, 3);
    std::copy(s.begin(), s.end(), t.row(i).begin());
  }
  const BatchLoss l = batch_loss(m, d.samples, t, {}, 0.0, nullptr);
  const Matrix p = predict(m, d.samples);
  double want = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) want -= t(i, j) * std::log(p(i, j));
  }
  want /= static_cast<double>(d.size() * 3);
  EXPECT_NEAR(l.main, want, 1e-12);
  EXPECT_THROW(batch_loss(m, d.samples, Matrix(d.size(), 4), {}, 0.0, nullptr), Error);
}

ExperimentSetup tiny_setup(const fs::path& dir) {
  ExperimentSetup s;
  s.run_id = "tiny";
  s.model = small_mlp();
  s.train = sgd_config(StrategyMode::kBsd, 4);
  s.train_set = small_blobs(15, 1);
  s.test_set = small_blobs(10, 2);
  s.trace_every = 2;
  s.run_dir = dir;
  s.config_text = "mode = bsd\n";
  return s;
}

TEST(RunExperiment, ThreeSeedsThreeRecords) {
  const fs::path dir = fresh_dir("three");
  ExperimentSetup s = tiny_setup(dir);
  s.seeds = {1, 2, 3};
  s.threads = 2;
  const auto records = run_experiment(s);
  ASSERT_EQ(records.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(records[i].seed, i + 1);
    EXPECT_EQ(records[i].epochs.size(), 4u);
    const std::string seed = std::to_string(i + 1);
    EXPECT_TRUE(fs::exists(dir / "records" / ("seed-" + seed + ".jsonl")));
    EXPECT_TRUE(fs::exists(dir / "records" / ("store-seed-" + seed + ".csv")));
    EXPECT_TRUE(fs::exists(dir / "checkpoints" / ("seed-" + seed + ".ckpt")));
    EXPECT_TRUE(fs::exists(dir / "traces" / ("seed-" + seed) / "epoch-2.csv"));
    EXPECT_TRUE(fs::exists(dir / "traces" / ("seed-" + seed) / "epoch-4.csv"));
    const RunRecord back = read_run_record(dir / "records" / ("seed-" + seed + ".jsonl"));
    EXPECT_EQ(back.epochs.size(), 4u);
    EXPECT_EQ(back.final_report.accuracy, records[i].final_report.accuracy);
    EXPECT_EQ(back.config_text, "mode = bsd\n");
  }
  EXPECT_NE(records[0].epochs[0].stats.train_loss, records[1].epochs[0].stats.train_loss);
  EXPECT_EQ(slurp(dir / "config.resolved"), "mode = bsd\n");
}

TEST(RunExperiment, ResumeAfterInterruptionMatchesUninterrupted) {
  const fs::path a = fresh_dir("uninterrupted");
  ExperimentSetup full = tiny_setup(a);
  full.checkpoint_every = 2;
  run_experiment(full);

  const fs::path b = fresh_dir("interrupted");
  ExperimentSetup cut = tiny_setup(b);
  cut.checkpoint_every = 2;
  cut.progress = [](const std::string& line) {
    if (line.find("epoch 3/4") != std::string::npos) throw Error("interrupted");
  };
  EXPECT_THROW(run_experiment(cut), Error);
  ExperimentSetup again = tiny_setup(b);
  again.checkpoint_every = 2;
  again.resume = true;
  run_experiment(again);

  for (const char* f : {"records/seed-1.jsonl", "records/store-seed-1.csv",
                        "checkpoints/seed-1.ckpt", "traces/seed-1/epoch-4.csv"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(RunExperiment, RepeatedRunsAreByteIdentical) {
  const fs::path a = fresh_dir("repeat-a"), b = fresh_dir("repeat-b");
  run_experiment(tiny_setup(a));
  run_experiment(tiny_setup(b));
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    EXPECT_EQ(slurp(entry.path()), slurp(b / rel)) << rel;
  }
}

TEST(RunExperiment, Errors) {
  ExperimentSetup s = tiny_setup({});
  s.seeds.clear();
  EXPECT_THROW(run_experiment(s), Error);
  s = tiny_setup({});
  s.test_set = small_blobs(5, 2, 4);
  EXPECT_THROW(run_experiment(s), Error);
  EXPECT_THROW(read_run_record(fresh_dir("nothing") / "missing.jsonl"), FormatError);
}

TEST(Traces, RoundTrip) {
  const fs::path dir = fresh_dir("traces");
  const Matrix p(2, 3, std::vector<double>{0.1, 0.2, 0.7, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  const std::vector<int> labels = {2, 0};
  write_trace(dir / "t.csv", p, labels);
  const Trace t = read_trace(dir / "t.csv");
  EXPECT_EQ(t.probs, p);
  EXPECT_EQ(t.labels, labels);
  const std::vector<std::vector<std::size_t>> seq = {{0, 1, 1}, {2, 2, 0}};
  write_flip_trace(dir / "f.csv", seq);
  EXPECT_EQ(read_flip_trace(dir / "f.csv"), seq);
}

}  // namespace
}  // namespace bsdlab
