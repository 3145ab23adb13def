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

#include "bsdlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>

#include "bsdlab/checkpoint.hpp"
#include "bsdlab/error.hpp"
#include "bsdlab/random.hpp"

namespace bsdlab {
namespace {

constexpr std::uint64_t kShuffleTag = 0x5348;
constexpr std::uint64_t kDropoutTag = 0xD50;
constexpr std::uint64_t kWeakTag = 0x3EAC;
constexpr std::uint64_t kStrongTag = 0x5790;

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(message);
}

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

}  // namespace

double lr_at(LrSchedule schedule, double base, std::size_t epoch, std::size_t total) {
  if (total == 0) throw Error("lr schedule needs a positive epoch count");
  if (schedule == LrSchedule::kConstant) return base;
  const double t = static_cast<double>(epoch) / static_cast<double>(total);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void TrainConfig::validate() const {
  require(epochs > 0, "epochs must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(std::isfinite(optimizer.lr) && optimizer.lr >= 0.0, "lr must be non-negative");
  require(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0,
          "momentum must be in [0,1)");
  require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "beta1 must be in [0,1)");
  require(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "beta2 must be in [0,1)");
  require(optimizer.eps > 0.0, "adam_eps must be positive");
  require(optimizer.weight_decay >= 0.0, "weight_decay must be non-negative");
  strategy.validate();
  if (bsd_plus.enabled) {
    require(bsd_plus.lambda_a >= 0.0 && std::isfinite(bsd_plus.lambda_a),
            "lambda_a must be non-negative");
    require(bsd_plus.views > 0, "views must be at least 1");
  }
  require(augment.jitter >= 0.0, "jitter must be non-negative");
  require(augment.strong_jitter >= 0.0, "strong_jitter must be non-negative");
  require(in_unit(augment.erase_fraction), "erase_fraction must be in [0,1]");
  require(eval_every > 0, "eval_every must be positive");
  require(bins > 0, "bins must be positive");
}

ContrastiveResult contrastive_term(const Model& model, std::span<const Matrix> strong_views,
                                   const Matrix& anchor, double lambda_a, Rng* rng) {
  if (strong_views.empty()) throw Error("contrastive term needs at least one strong view");
  const std::size_t n = anchor.rows();
  const std::size_t k = anchor.cols();
  if (n == 0) throw Error("contrastive term: empty batch");
  const double scale =
      lambda_a / (static_cast<double>(strong_views.size()) * static_cast<double>(n));

  ContrastiveResult out;
  std::vector<double> log_p(k);
  std::vector<double> g(k);
  for (const Matrix& view : strong_views) {
    if (view.rows() != n) throw Error("contrastive term: view and anchor batch sizes differ");
    ForwardResult fr = forward(model, view, rng);
    Matrix dlogits(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      log_softmax_into(fr.logits.row(i), log_p);
      const auto q = anchor.row(i);
      const auto p = fr.probs.row(i);
      double kl = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        g[c] = log_p[c] - std::log(std::max(q[c], kProbFloor));
        kl += p[c] * g[c];
      }
      out.loss += scale * kl;
      for (std::size_t c = 0; c < k; ++c) dlogits(i, c) = scale * p[c] * (g[c] - kl);
    }
    accumulate(out.grads, backward(model, fr.cache, dlogits));
  }
  return out;
}

BatchLoss batch_loss(const Model& model, const Matrix& inputs, const Matrix& targets,
                     std::span<const Matrix> strong_views, double lambda_a, Rng* rng) {
  ForwardResult fr = forward(model, inputs, rng);
  if (!fr.probs.same_shape(targets)) {
    throw Error("batch loss: target " + shape_string(targets) + " does not match prediction " +
                shape_string(fr.probs));
  }
  const std::size_t n = targets.rows();
  const std::size_t k = targets.cols();
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(k));

  BatchLoss out;
  std::vector<double> log_p(k);
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax_into(fr.logits.row(i), log_p);
    const auto t = targets.row(i);
    for (std::size_t c = 0; c < k; ++c) {
      if (t[c] != 0.0) out.main -= scale * t[c] * log_p[c];
    }
  }
  out.grads = backward(model, fr.cache, cross_entropy_logit_grad(fr.probs, targets, scale));
  if (!strong_views.empty()) {
    ContrastiveResult c = contrastive_term(model, strong_views, fr.probs, lambda_a, rng);
    out.contrastive = c.loss;
    accumulate(out.grads, c.grads);
  }
  out.total = out.main + out.contrastive;
  out.probs = std::move(fr.probs);
  return out;
}

Trainer::Trainer(const ModelSpec& spec, TrainConfig cfg, Dataset train, std::uint64_t seed)
    : model_(spec),
      cfg_(std::move(cfg)),
      train_(std::move(train)),
      seed_(seed),
      strategy_(cfg_.strategy, train_.labels, spec.classes, cfg_.epochs) {
  cfg_.validate();
  train_.validate();
  if (train_.dim() != spec.input_dim) {
    throw Error("training set has " + std::to_string(train_.dim()) +
                " features, model expects " + std::to_string(spec.input_dim));
  }
  if (train_.classes != spec.classes) {
    throw Error("training set has " + std::to_string(train_.classes) +
                " classes, model expects " + std::to_string(spec.classes));
  }
  optimizer_.config = cfg_.optimizer;
}

Matrix Trainer::batch_inputs(std::span<const std::size_t> ids) const {
  Matrix x = gather_rows(train_.samples, ids);
  if (!cfg_.weak_augment && !cfg_.bsd_plus.enabled) return x;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::vector<double> v = augment_weak(
        train_.samples.row(ids[r]), train_.image, cfg_.augment,
        derive_seed({seed_, kWeakTag, static_cast<std::uint64_t>(epoch_), ids[r]}));
    std::copy(v.begin(), v.end(), x.row(r).begin());
  }
  return x;
}

EpochStats Trainer::train_epoch() {
  if (epoch_ >= cfg_.epochs) {
    throw Error("all " + std::to_string(cfg_.epochs) + " epochs are already done");
  }
  const std::size_t n = train_.size();
  const std::size_t k = train_.classes;
  const auto e64 = static_cast<std::uint64_t>(epoch_);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(derive_seed({seed_, kShuffleTag, e64}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

  EpochStats stats;
  stats.epoch = epoch_ + 1;
  stats.lr = lr_at(cfg_.schedule, cfg_.optimizer.lr, epoch_, cfg_.epochs);
  optimizer_.config.lr = stats.lr;
  model_.set_mode(Mode::kTrain);

  std::size_t batches = 0;
  for (std::size_t start = 0; start < n; start += cfg_.batch_size, ++batches) {
    const std::size_t stop = std::min(n, start + cfg_.batch_size);
    const std::span<const std::size_t> ids(order.data() + start, stop - start);

    Matrix targets(ids.size(), k);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const std::vector<double> t = strategy_.target(ids[r], epoch_ + 1);
      std::copy(t.begin(), t.end(), targets.row(r).begin());
    }
    const Matrix inputs = batch_inputs(ids);

    std::vector<Matrix> views;
    if (cfg_.bsd_plus.enabled) {
      for (std::size_t v = 0; v < cfg_.bsd_plus.views; ++v) {
        Matrix view(ids.size(), train_.dim());
        for (std::size_t r = 0; r < ids.size(); ++r) {
          const std::vector<double> s = augment_strong(
              train_.samples.row(ids[r]), train_.image, cfg_.augment,
              derive_seed({seed_, kStrongTag, e64, ids[r], v}));
          std::copy(s.begin(), s.end(), view.row(r).begin());
        }
        views.push_back(std::move(view));
      }
    }

    Rng dropout(derive_seed({seed_, kDropoutTag, e64, batches}));
    const std::string where =
        "non-finite loss at epoch " + std::to_string(epoch_ + 1) + ", batch " + std::to_string(batches);
    BatchLoss loss;
    try {
      loss = batch_loss(model_, inputs, targets, views, cfg_.bsd_plus.lambda_a, &dropout);
    } catch (const Error& e) {
      if (std::string(e.what()) != "non-finite logits") throw;
      throw Error(where + " (non-finite logits, lr " + std::to_string(stats.lr) + ")");
    }
    if (after_forward) after_forward(strategy_, ids);
    if (!std::isfinite(loss.total)) {
      throw Error(where + " (main " + std::to_string(loss.main) + ", contrastive " +
                  std::to_string(loss.contrastive) + ", lr " + std::to_string(stats.lr) + ")");
    }
    optimizer_step(model_.mutable_params(), loss.grads, optimizer_, model_.block_names());

    for (std::size_t r = 0; r < ids.size(); ++r) {
      const auto t = targets.row(r);
      const auto p = loss.probs.row(r);
      stats.train_loss += soft_cross_entropy(t, p);
      stats.train_kl += kl_div(t, p);
      stats.mean_target_entropy += entropy(t);
      strategy_.observe(ids[r], p);
    }
    stats.contrastive += loss.contrastive;
  }
  strategy_.end_epoch();
  ++epoch_;

  const double dn = static_cast<double>(n);
  stats.train_loss /= dn;
  stats.train_kl /= dn;
  stats.mean_target_entropy /= dn;
  stats.contrastive /= static_cast<double>(std::max<std::size_t>(batches, 1));
  stats.mean_evidence = strategy_.store().mean_mass();
  return stats;
}

void Trainer::save_state(const std::filesystem::path& path) const {
  Container c;
  c.header.emplace_back("kind", "training");
  c.header.emplace_back("epoch", std::to_string(epoch_));
  c.header.emplace_back("run_seed", std::to_string(seed_));
  c.header.emplace_back("strategy", to_string(cfg_.strategy.mode));
  c.header.emplace_back("samples", std::to_string(train_.size()));
  c.header.emplace_back("optimizer_step", std::to_string(optimizer_.step));
  append_model_spec(model_.spec(), c);
  const auto& names = model_.block_names();
  const auto params = model_.params();
  for (std::size_t b = 0; b < params.size(); ++b) c.blocks.emplace_back(names[b], params[b]);
  for (std::size_t b = 0; b < optimizer_.first_moment.size(); ++b) {
    c.blocks.emplace_back("opt.m." + names[b], optimizer_.first_moment[b]);
  }
  for (std::size_t b = 0; b < optimizer_.second_moment.size(); ++b) {
    c.blocks.emplace_back("opt.v." + names[b], optimizer_.second_moment[b]);
  }
  const EvidenceStore& store = strategy_.store();
  c.blocks.emplace_back("store.targets", store.targets());
  c.blocks.emplace_back("store.mass", Matrix(store.size(), 1, store.masses()));
  if (const TemporalEnsemble* te = strategy_.ensemble()) {
    c.blocks.emplace_back("te.accum", te->accumulator());
    std::vector<double> counts(te->counts().begin(), te->counts().end());
    const std::size_t n = counts.size();
    c.blocks.emplace_back("te.count", Matrix(n, 1, std::move(counts)));
  }
  write_container(path, c);
}

void Trainer::load_state(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.get("kind") != "training") {
    throw Error(path.string() + " is not a training-state checkpoint");
  }
  if (read_model_spec(c) != model_.spec()) {
    throw Error(path.string() + ": model spec differs from the configured model");
  }
  if (c.get("strategy") != to_string(cfg_.strategy.mode)) {
    throw Error(path.string() + ": saved with strategy " + c.get("strategy") +
                ", configured " + to_string(cfg_.strategy.mode));
  }
  if (c.get("samples") != std::to_string(train_.size())) {
    throw Error(path.string() + ": saved for " + c.get("samples") +
                " training samples, have " + std::to_string(train_.size()));
  }
  if (c.get("run_seed") != std::to_string(seed_)) {
    throw Error(path.string() + ": saved for seed " + c.get("run_seed") + ", have " +
                std::to_string(seed_));
  }
  const std::size_t epoch = std::stoull(c.get("epoch"));
  if (epoch > cfg_.epochs) throw Error(path.string() + ": epoch beyond the configured count");

  const auto& names = model_.block_names();
  std::vector<Matrix> params;
  for (const std::string& name : names) params.push_back(c.block(name));
  Model restored(model_.spec(), std::move(params));

  OptimizerState opt;
  opt.config = cfg_.optimizer;
  opt.step = std::stoull(c.get("optimizer_step"));
  if (opt.step > 0) {
    for (const std::string& name : names) {
      const Matrix* m = nullptr;
      const Matrix* v = nullptr;
      for (const auto& [bname, block] : c.blocks) {
        if (bname == "opt.m." + name) m = &block;
        if (bname == "opt.v." + name) v = &block;
      }
      const bool adam = opt.config.kind == OptimizerKind::kAdam;
      if (m == nullptr || (adam && v == nullptr)) {
        throw Error(path.string() + ": missing optimizer moments for " + name);
      }
      opt.first_moment.push_back(*m);
      if (adam) opt.second_moment.push_back(*v);
    }
  }

  const Matrix& y = c.block("store.targets");
  const Matrix& a = c.block("store.mass");
  if (y.rows() != train_.size() || y.cols() != train_.classes || a.rows() != y.rows()) {
    throw Error(path.string() + ": store shape " + shape_string(y) + " does not match the data");
  }
  EvidenceStore store(y, std::vector<double>(a.data().begin(), a.data().end()),
                      strategy_.store().gamma());

  if (TemporalEnsemble* te = strategy_.mutable_ensemble()) {
    const Matrix& z = c.block("te.accum");
    const Matrix& counts = c.block("te.count");
    std::vector<std::size_t> cnt;
    for (double v : counts.data()) cnt.push_back(static_cast<std::size_t>(v));
    te->restore(z, std::move(cnt));
  }
  model_ = std::move(restored);
  optimizer_ = std::move(opt);
  strategy_.mutable_store() = std::move(store);
  epoch_ = epoch;
}

}  // namespace bsdlab
