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

#include "bsdlab/targets.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bsdlab/error.hpp"

namespace bsdlab {

namespace {

constexpr double kSimplexExact = 1e-12;
constexpr double kSimplexRenorm = 1e-6;

}  // namespace

std::vector<double> checked_simplex(std::span<const double> pred) {
  std::vector<double> p(pred.begin(), pred.end());
  double sum = 0.0;
  for (double& v : p) {
    if (!std::isfinite(v) || v < -kSimplexExact) {
      throw Error("prediction is not a probability vector (entry " +
                  std::to_string(v) + ")");
    }
    if (v < 0.0) v = 0.0;
    sum += v;
  }
  const double gap = std::abs(sum - 1.0);
  if (gap <= kSimplexExact) return p;
  if (gap < kSimplexRenorm) {
    for (double& v : p) v /= sum;
    return p;
  }
  throw Error("prediction is not on the simplex (sum " + std::to_string(sum) + ")");
}

EvidenceStore EvidenceStore::init_prior(std::span<const int> labels, std::size_t k,
                                        double c, double epsilon, double gamma) {
  if (k < 2) throw Error("evidence store: class count must be at least 2");
  if (!(c > 0.0)) throw Error("evidence store: prior strength c must be positive");
  if (!(epsilon >= 0.0)) throw Error("evidence store: epsilon must be nonnegative");
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw Error("evidence store: gamma must be in [0,1]");
  }
  const double mass = c + static_cast<double>(k - 1) * epsilon;
  Matrix targets(labels.size(), k, epsilon / mass);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw Error("evidence store: label " + std::to_string(labels[i]) +
                  " of sample " + std::to_string(i) + " is outside [0," +
                  std::to_string(k) + ")");
    }
    targets(i, static_cast<std::size_t>(labels[i])) = c / mass;
  }
  return EvidenceStore(std::move(targets), std::vector<double>(labels.size(), mass), gamma);
}

EvidenceStore::EvidenceStore(Matrix targets, std::vector<double> mass, double gamma)
    : targets_(std::move(targets)), mass_(std::move(mass)), gamma_(gamma) {
  if (mass_.size() != targets_.rows()) {
    throw Error("evidence store: mass vector length does not match target rows");
  }
  if (!(gamma_ >= 0.0 && gamma_ <= 1.0)) {
    throw Error("evidence store: gamma must be in [0,1]");
  }
}

double EvidenceStore::history_weight(std::size_t i) const {
  const double discounted = gamma_ * mass_[i];
  return discounted / (discounted + 1.0);
}

void EvidenceStore::update(std::size_t i, std::span<const double> pred) {
  if (i >= size()) {
    throw Error("evidence store: sample index " + std::to_string(i) + " out of range");
  }
  if (pred.size() != classes()) {
    throw Error("evidence store: prediction has " + std::to_string(pred.size()) +
                " classes, store has " + std::to_string(classes()));
  }
  const std::vector<double> p = checked_simplex(pred);
  const double discounted = gamma_ * mass_[i];
  const double w = discounted / (discounted + 1.0);
  std::span<double> y = targets_.row(i);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = w * y[j] + (1.0 - w) * p[j];
  mass_[i] = discounted + 1.0;
}

void EvidenceStore::set_row(std::size_t i, std::span<const double> target, double mass) {
  std::copy(target.begin(), target.end(), targets_.row(i).begin());
  mass_[i] = mass;
}

double EvidenceStore::mean_mass() const {
  double sum = 0.0;
  for (double a : mass_) sum += a;
  return mass_.empty() ? 0.0 : sum / static_cast<double>(mass_.size());
}

void EvidenceStore::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, path.string() + ": cannot open");
  out << "sample_id,A";
  for (std::size_t j = 0; j < classes(); ++j) out << ",y_" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < size(); ++i) {
    out << i;
    std::snprintf(buf, sizeof buf, "%.17g", mass_[i]);
    out << ',' << buf;
    for (double v : targets_.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, path.string() + ": write failed");
}

EvidenceStore EvidenceStore::read_csv(const std::filesystem::path& path, double gamma) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,A", 0) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic,
                      path.string() + ": missing store snapshot header");
  }
  const std::size_t k =
      static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  std::vector<double> values;
  std::vector<double> mass;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != k + 2 || static_cast<std::size_t>(cells[0]) != row) {
      throw FormatError(FormatError::Kind::kRowMismatch,
                        path.string() + ": malformed row " + std::to_string(row));
    }
    mass.push_back(cells[1]);
    values.insert(values.end(), cells.begin() + 2, cells.end());
    ++row;
  }
  return EvidenceStore(Matrix(row, k, std::move(values)), std::move(mass), gamma);
}

double evidence_mass_closed_form(double initial_mass, double gamma, std::size_t t) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must be in [0,1]");
  const double steps = static_cast<double>(t);
  if (gamma == 1.0) return initial_mass + steps;
  const double decay = std::pow(gamma, steps);
  return decay * initial_mass + (1.0 - decay) / (1.0 - gamma);
}

double fixed_point(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw Error("fixed point requires gamma in [0,1)");
  }
  return 1.0 / (1.0 - gamma);
}

std::vector<double> sharpen(std::span<const double> target, double tau) {
  if (!(tau > 0.0)) throw Error("sharpening temperature tau must be positive");
  std::vector<double> out(target.begin(), target.end());
  if (tau == 1.0) return out;
  const double power = 1.0 / tau;
  double sum = 0.0;
  for (double& v : out) {
    v = v > 0.0 ? std::pow(v, power) : 0.0;
    sum += v;
  }
  if (!(sum > 0.0)) throw Error("sharpen: target underflowed to zero");
  for (double& v : out) v /= sum;
  return out;
}

TemporalEnsemble::TemporalEnsemble(std::size_t n, std::size_t k, double momentum)
    : accum_(n, k), counts_(n, 0), momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error("temporal ensemble momentum must be in [0,1)");
  }
}

void TemporalEnsemble::update(std::size_t i, std::span<const double> pred) {
  const std::vector<double> p = checked_simplex(pred);
  std::span<double> z = accum_.row(i);
  for (std::size_t j = 0; j < z.size(); ++j) {
    z[j] = momentum_ * z[j] + (1.0 - momentum_) * p[j];
  }
  ++counts_[i];
}

std::vector<double> TemporalEnsemble::target(std::size_t i) const {
  if (counts_[i] == 0) throw Error("temporal ensemble: sample has no observations");
  const double correction =
      1.0 - std::pow(momentum_, static_cast<double>(counts_[i]));
  std::vector<double> out(accum_.row(i).begin(), accum_.row(i).end());
  for (double& v : out) v /= correction;
  return out;
}

void TemporalEnsemble::restore(Matrix accum, std::vector<std::size_t> counts) {
  if (!accum.same_shape(accum_) || counts.size() != counts_.size()) {
    throw Error("temporal ensemble: restored state has the wrong shape");
  }
  accum_ = std::move(accum);
  counts_ = std::move(counts);
}

std::string to_string(StrategyMode mode) {
  switch (mode) {
    case StrategyMode::kBsd: return "bsd";
    case StrategyMode::kBaseline: return "baseline";
    case StrategyMode::kLabelSmoothing: return "label-smoothing";
    case StrategyMode::kPsKd: return "ps-kd";
    case StrategyMode::kDlb: return "dlb";
    case StrategyMode::kTe: return "te";
  }
  return "unknown";
}

std::optional<StrategyMode> parse_strategy_mode(const std::string& text) {
  for (StrategyMode m : {StrategyMode::kBsd, StrategyMode::kBaseline,
                         StrategyMode::kLabelSmoothing, StrategyMode::kPsKd,
                         StrategyMode::kDlb, StrategyMode::kTe}) {
    if (to_string(m) == text) return m;
  }
  if (text == "ls") return StrategyMode::kLabelSmoothing;
  return std::nullopt;
}

Granularity StrategyConfig::default_granularity(StrategyMode mode) {
  return mode == StrategyMode::kDlb ? Granularity::kMiniBatch : Granularity::kEpoch;
}

void StrategyConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(gamma)) throw Error("gamma must be in [0,1]");
  if (!(c > 0.0)) throw Error("c must be positive");
  if (!(epsilon >= 0.0)) throw Error("epsilon must be nonnegative");
  if (!(tau > 0.0)) throw Error("tau must be positive");
  if (!in_unit(ls_alpha)) throw Error("ls_alpha must be in [0,1]");
  if (!in_unit(pskd_alpha)) throw Error("pskd_alpha must be in [0,1]");
  if (!(te_momentum >= 0.0 && te_momentum < 1.0)) {
    throw Error("te_momentum must be in [0,1)");
  }
  if (!in_unit(te_weight)) throw Error("te_weight must be in [0,1]");
  if (!(dlb_alpha >= 0.0)) throw Error("dlb_alpha must be nonnegative");
  if (mode == StrategyMode::kDlb && granularity != Granularity::kMiniBatch) {
    throw Error("dlb requires mini-batch granularity");
  }
}

std::vector<double> strategy_target(const StrategyConfig& cfg, const EvidenceStore& store,
                                    const TemporalEnsemble* ensemble, std::size_t i,
                                    std::size_t epoch, std::size_t total_epochs,
                                    int label) {
  const std::size_t k = store.classes();
  std::vector<double> hard = one_hot(static_cast<std::size_t>(label), k);
  auto mix = [&](double weight, std::span<const double> soft) {
    std::vector<double> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = (1.0 - weight) * hard[j] + weight * soft[j];
    return out;
  };

  switch (cfg.mode) {
    case StrategyMode::kBaseline:
      return hard;
    case StrategyMode::kLabelSmoothing: {
      const std::vector<double> uniform(k, 1.0 / static_cast<double>(k));
      return mix(cfg.ls_alpha, uniform);
    }
    case StrategyMode::kBsd:
      return sharpen(store.target(i), cfg.tau);
    case StrategyMode::kPsKd: {
      if (total_epochs == 0) throw Error("ps-kd needs the total epoch count");
      const double ramp = cfg.pskd_alpha * static_cast<double>(epoch) /
                          static_cast<double>(total_epochs);
      return mix(ramp, store.target(i));
    }
    case StrategyMode::kDlb:
      return mix(cfg.dlb_alpha / (1.0 + cfg.dlb_alpha), store.target(i));
    case StrategyMode::kTe:
      if (ensemble == nullptr) throw Error("te targets need the temporal ensemble");
      if (ensemble->count(i) == 0) return hard;
      return mix(cfg.te_weight, ensemble->target(i));
  }
  throw Error("unknown strategy mode");
}

TargetStrategy::TargetStrategy(StrategyConfig cfg, std::span<const int> labels,
                               std::size_t k, std::size_t total_epochs)
    : cfg_(std::move(cfg)),
      labels_(labels.begin(), labels.end()),
      classes_(k),
      total_epochs_(total_epochs),
      store_(Matrix(), {}, 0.0) {
  cfg_.validate();
  switch (cfg_.mode) {
    case StrategyMode::kPsKd:
    case StrategyMode::kDlb:
    case StrategyMode::kTe:
      // One-hot rows with gamma = 0: each update replaces the row.
      store_ = EvidenceStore::init_prior(labels_, k, 1.0, 0.0, 0.0);
      break;
    default:
      store_ = EvidenceStore::init_prior(labels_, k, cfg_.c, cfg_.epsilon, cfg_.gamma);
  }
  if (cfg_.mode == StrategyMode::kTe) ensemble_.emplace(labels_.size(), k, cfg_.te_momentum);
  pending_ = Matrix(labels_.size(), k);
  has_pending_row_.assign(labels_.size(), 0);
}

bool TargetStrategy::updates_state() const noexcept {
  return cfg_.mode != StrategyMode::kBaseline &&
         cfg_.mode != StrategyMode::kLabelSmoothing;
}

std::vector<double> TargetStrategy::target(std::size_t i, std::size_t epoch) const {
  return strategy_target(cfg_, store_, ensemble(), i, epoch, total_epochs_, labels_[i]);
}

void TargetStrategy::observe(std::size_t i, std::span<const double> pred) {
  if (!updates_state()) return;
  if (cfg_.granularity == Granularity::kMiniBatch) {
    apply(i, pred);
    return;
  }
  const std::vector<double> p = checked_simplex(pred);
  std::copy(p.begin(), p.end(), pending_.row(i).begin());
  if (!has_pending_row_[i]) {
    has_pending_row_[i] = 1;
    ++pending_count_;
  }
}

void TargetStrategy::end_epoch() {
  if (pending_count_ == 0) return;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!has_pending_row_[i]) continue;
    apply(i, pending_.row(i));
    has_pending_row_[i] = 0;
  }
  pending_count_ = 0;
}

void TargetStrategy::apply(std::size_t i, std::span<const double> pred) {
  if (cfg_.mode == StrategyMode::kTe) {
    ensemble_->update(i, pred);
  } else {
    store_.update(i, pred);
  }
}

}  // namespace bsdlab
