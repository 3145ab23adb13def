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

#include "bsdlab/cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "bsdlab/random.hpp"

namespace bsdlab::cli {
namespace {

namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
    throw ConfigError(key, key + ": expected a number, got '" + v + "'");
  }
  return d;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  if (v.empty() || v.front() == '-') {
    throw ConfigError(key, key + ": expected a non-negative integer, got '" + v + "'");
  }
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError(key, key + ": expected a non-negative integer, got '" + v + "'");
  }
  return u;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, key + ": expected true or false, got '" + v + "'");
}

template <typename E>
E to_enum(const std::string& key, const std::string& v,
          const std::vector<std::pair<std::string, E>>& table) {
  std::string options;
  for (const auto& [name, value] : table) {
    if (name == v) return value;
    options += (options.empty() ? "" : ", ") + name;
  }
  throw ConfigError(key, key + ": unknown value '" + v + "' (expected one of " + options + ")");
}

template <typename E>
std::string enum_name(E value, const std::vector<std::pair<std::string, E>>& table) {
  for (const auto& [name, v] : table) {
    if (v == value) return name;
  }
  return "?";
}

const std::vector<std::pair<std::string, DatasetKind>> kDatasets = {
    {"blobs", DatasetKind::kBlobs}, {"idx", DatasetKind::kIdx}, {"csv", DatasetKind::kCsv}};
const std::vector<std::pair<std::string, NoiseKind>> kNoise = {
    {"none", NoiseKind::kNone},
    {"symmetric", NoiseKind::kSymmetric},
    {"asymmetric", NoiseKind::kAsymmetric}};
const std::vector<std::pair<std::string, OodKind>> kOod = {
    {"none", OodKind::kNone}, {"uniform", OodKind::kUniform}, {"shifted", OodKind::kShifted}};
const std::vector<std::pair<std::string, Architecture>> kArch = {
    {"mlp", Architecture::kMlp}, {"tiny-conv", Architecture::kTinyConv}};
const std::vector<std::pair<std::string, Activation>> kAct = {{"relu", Activation::kRelu},
                                                              {"tanh", Activation::kTanh}};
const std::vector<std::pair<std::string, OptimizerKind>> kOpt = {
    {"sgd", OptimizerKind::kSgdMomentum}, {"adam", OptimizerKind::kAdam}};
const std::vector<std::pair<std::string, LrSchedule>> kSched = {
    {"constant", LrSchedule::kConstant}, {"cosine", LrSchedule::kCosine}};
const std::vector<std::pair<std::string, StrategyMode>> kModes = {
    {"bsd", StrategyMode::kBsd},         {"baseline", StrategyMode::kBaseline},
    {"label-smoothing", StrategyMode::kLabelSmoothing},
    {"ps-kd", StrategyMode::kPsKd},      {"dlb", StrategyMode::kDlb},
    {"te", StrategyMode::kTe}};
const std::vector<std::pair<std::string, Granularity>> kGran = {
    {"epoch", Granularity::kEpoch}, {"mini-batch", Granularity::kMiniBatch}};

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, int>) {
      out += std::to_string(v[i]);
    } else {
      out += std::to_string(static_cast<unsigned long long>(v[i]));
    }
  }
  return out;
}

struct Entry {
  KeyInfo info;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define BSD_DOUBLE(KEY, FIELD, HELP)                                                      \
  Entry {                                                                                 \
    {KEY, HELP}, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }, \
        [](const ExperimentConfig& c) { return fmt_double(c.FIELD); }                     \
  }
#define BSD_SIZE(KEY, FIELD, HELP)                                                        \
  Entry {                                                                                 \
    {KEY, HELP}, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_size(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                 \
  }
#define BSD_U64(KEY, FIELD, HELP)                                                         \
  Entry {                                                                                 \
    {KEY, HELP}, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_u64(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }                 \
  }
#define BSD_BOOL(KEY, FIELD, HELP)                                                        \
  Entry {                                                                                 \
    {KEY, HELP}, [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_bool(KEY, v); }, \
        [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); } \
  }
#define BSD_ENUM(KEY, FIELD, TABLE, HELP)                                                 \
  Entry {                                                                                 \
    {KEY, HELP},                                                                          \
        [](ExperimentConfig& c, const std::string& v) { c.FIELD = to_enum(KEY, v, TABLE); }, \
        [](const ExperimentConfig& c) { return enum_name(c.FIELD, TABLE); }               \
  }
#define BSD_PATH(KEY, FIELD, HELP)                                                        \
  Entry {                                                                                 \
    {KEY, HELP}, [](ExperimentConfig& c, const std::string& v) { c.FIELD = v; },          \
        [](const ExperimentConfig& c) { return c.FIELD.string(); }                        \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{{"run_id", "name of the run directory under output_dir"},
            [](ExperimentConfig& c, const std::string& v) {
              if (v.empty() || v.find('/') != std::string::npos || v == "." || v == "..") {
                throw ConfigError("run_id", "run_id must be a non-empty name without '/'");
              }
              c.run_id = v;
            },
            [](const ExperimentConfig& c) { return c.run_id; }},
      BSD_PATH("output_dir", output_dir, "output root (BSDLAB_OUTPUT_ROOT overrides)"),
      Entry{{"seeds", "comma-separated run seeds"},
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<std::uint64_t> seeds;
              for (const std::string& s : split_list(v)) seeds.push_back(to_u64("seeds", s));
              if (seeds.empty()) throw ConfigError("seeds", "seeds must list at least one seed");
              std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
              if (uniq.size() != seeds.size()) {
                throw ConfigError("seeds", "seeds must not repeat");
              }
              c.seeds = std::move(seeds);
            },
            [](const ExperimentConfig& c) { return join(c.seeds); }},
      BSD_SIZE("threads", threads, "worker threads over seeds"),

      BSD_ENUM("dataset", data.kind, kDatasets, "blobs, idx or csv"),
      BSD_SIZE("classes", data.blobs.classes, "blobs: class count"),
      BSD_SIZE("per_class", data.blobs.per_class, "blobs: training samples per class"),
      BSD_SIZE("test_per_class", data.test_per_class, "blobs: test samples per class"),
      BSD_SIZE("dim", data.blobs.dim, "blobs: feature dimension"),
      BSD_DOUBLE("spacing", data.blobs.spacing, "blobs: distance between neighbouring centers"),
      BSD_DOUBLE("spread", data.blobs.spread, "blobs: per-axis standard deviation"),
      BSD_U64("data_seed", data.blobs.seed, "blobs: sampling seed"),
      BSD_PATH("train_images", data.train_images, "idx: training images"),
      BSD_PATH("train_labels", data.train_labels, "idx: training labels"),
      BSD_PATH("test_images", data.test_images, "idx: test images"),
      BSD_PATH("test_labels", data.test_labels, "idx: test labels"),
      BSD_PATH("train_csv", data.train_csv, "csv: training table"),
      BSD_PATH("test_csv", data.test_csv, "csv: test table"),
      Entry{{"label_column", "csv: label column name"},
            [](ExperimentConfig& c, const std::string& v) {
              if (v.empty()) throw ConfigError("label_column", "label_column must not be empty");
              c.data.label_column = v;
            },
            [](const ExperimentConfig& c) { return c.data.label_column; }},
      BSD_SIZE("data_classes", data.classes, "idx/csv: class count, 0 infers"),

      BSD_ENUM("noise", noise.kind, kNoise, "none, symmetric or asymmetric"),
      BSD_DOUBLE("noise_rate", noise.rate, "fraction of training labels corrupted"),
      BSD_U64("noise_seed", noise.seed, "noise injection seed"),
      Entry{{"noise_map", "asymmetric: 'cyclic' or comma list of target classes (-1 keeps)"},
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "cyclic") {
                c.cyclic_noise_map = true;
                c.noise.map.clear();
                return;
              }
              std::vector<int> map;
              for (const std::string& s : split_list(v)) {
                char* end = nullptr;
                const long x = std::strtol(s.c_str(), &end, 10);
                if (s.empty() || end != s.c_str() + s.size() || x < -1) {
                  throw ConfigError("noise_map", "noise_map: bad class index '" + s + "'");
                }
                map.push_back(static_cast<int>(x));
              }
              if (map.empty()) throw ConfigError("noise_map", "noise_map must not be empty");
              c.cyclic_noise_map = false;
              c.noise.map = std::move(map);
            },
            [](const ExperimentConfig& c) {
              return c.cyclic_noise_map ? std::string("cyclic") : join(c.noise.map);
            }},

      BSD_ENUM("ood", ood, kOod, "out-of-distribution set: none, uniform or shifted"),
      BSD_SIZE("ood_size", ood_size, "uniform: number of OOD samples"),
      BSD_DOUBLE("ood_shift", ood_shift, "shifted: offset added to every feature"),
      BSD_U64("ood_seed", ood_seed, "OOD sampling seed"),

      BSD_ENUM("arch", arch, kArch, "mlp or tiny-conv"),
      Entry{{"hidden", "comma-separated hidden widths (empty: linear model)"},
            [](ExperimentConfig& c, const std::string& v) {
              std::vector<std::size_t> h;
              for (const std::string& s : split_list(v)) {
                const std::size_t w = to_size("hidden", s);
                if (w == 0) throw ConfigError("hidden", "hidden widths must be at least 1");
                h.push_back(w);
              }
              c.hidden = std::move(h);
            },
            [](const ExperimentConfig& c) { return join(c.hidden); }},
      BSD_ENUM("activation", activation, kAct, "relu or tanh"),
      BSD_DOUBLE("dropout", dropout, "dropout rate on hidden activations"),

      BSD_SIZE("epochs", train.epochs, "training epochs"),
      BSD_SIZE("batch_size", train.batch_size, "mini-batch size"),
      BSD_ENUM("optimizer", train.optimizer.kind, kOpt, "sgd (momentum) or adam"),
      BSD_DOUBLE("lr", train.optimizer.lr, "base learning rate"),
      BSD_DOUBLE("momentum", train.optimizer.momentum, "sgd momentum"),
      BSD_DOUBLE("beta1", train.optimizer.beta1, "adam first-moment decay"),
      BSD_DOUBLE("beta2", train.optimizer.beta2, "adam second-moment decay"),
      BSD_DOUBLE("adam_eps", train.optimizer.eps, "adam denominator epsilon"),
      BSD_DOUBLE("weight_decay", train.optimizer.weight_decay, "L2 coefficient"),
      BSD_ENUM("schedule", train.schedule, kSched, "constant or cosine"),
      BSD_SIZE("eval_every", train.eval_every, "test evaluation cadence in epochs"),
      BSD_SIZE("bins", train.bins, "calibration bins"),

      BSD_ENUM("mode", train.strategy.mode, kModes,
               "bsd, baseline, label-smoothing, ps-kd, dlb or te"),
      BSD_DOUBLE("gamma", train.strategy.gamma, "bsd: evidence discount"),
      BSD_DOUBLE("c", train.strategy.c, "bsd: prior strength on the label"),
      BSD_DOUBLE("epsilon", train.strategy.epsilon, "bsd: prior on other classes"),
      BSD_DOUBLE("tau", train.strategy.tau, "bsd: target sharpening, 1 = off"),
      BSD_DOUBLE("ls_alpha", train.strategy.ls_alpha, "label-smoothing weight"),
      BSD_DOUBLE("pskd_alpha", train.strategy.pskd_alpha, "ps-kd final weight"),
      BSD_DOUBLE("te_momentum", train.strategy.te_momentum, "te accumulator momentum"),
      BSD_DOUBLE("te_weight", train.strategy.te_weight, "te distillation weight"),
      BSD_DOUBLE("dlb_alpha", train.strategy.dlb_alpha, "dlb distillation weight"),
      Entry{{"granularity", "target update timing: default, epoch or mini-batch"},
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "default") {
                c.granularity_default = true;
                return;
              }
              c.granularity_default = false;
              c.train.strategy.granularity = to_enum("granularity", v, kGran);
            },
            [](const ExperimentConfig& c) {
              const Granularity g = c.granularity_default
                                        ? StrategyConfig::default_granularity(c.train.strategy.mode)
                                        : c.train.strategy.granularity;
              return enum_name(g, kGran);
            }},

      BSD_BOOL("bsd_plus", train.bsd_plus.enabled, "add the strong-view consistency term"),
      BSD_DOUBLE("lambda_a", train.bsd_plus.lambda_a, "consistency weight"),
      BSD_SIZE("views", train.bsd_plus.views, "strong views per sample"),
      BSD_BOOL("weak_augment", train.weak_augment, "augment training inputs"),
      BSD_DOUBLE("jitter", train.augment.jitter, "weak Gaussian jitter"),
      BSD_DOUBLE("strong_jitter", train.augment.strong_jitter, "strong jitter multiplier"),
      BSD_SIZE("pad", train.augment.pad, "grid crop padding"),
      BSD_DOUBLE("erase_fraction", train.augment.erase_fraction, "max erased side / min(h, w)"),

      BSD_SIZE("trace_every", trace_every, "prediction trace cadence, 0 disables"),
      BSD_SIZE("flip_frames", flip_frames, "perturbation frames, 0 disables"),
      BSD_DOUBLE("flip_step", flip_step, "perturbation scale per frame"),
      BSD_SIZE("checkpoint_every", checkpoint_every, "state checkpoint cadence, 0: end only"),
  };
  return table;
}

#undef BSD_DOUBLE
#undef BSD_SIZE
#undef BSD_U64
#undef BSD_BOOL
#undef BSD_ENUM
#undef BSD_PATH

const Entry* find_entry(const std::string& key) {
  for (const Entry& e : entries()) {
    if (e.info.key == key) return &e;
  }
  return nullptr;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
             const std::string& where) {
  const Entry* e = find_entry(key);
  if (e == nullptr) {
    std::string msg = where + "unknown key '" + key + "'";
    const std::string s = suggest_key(key);
    if (!s.empty()) msg += " (did you mean '" + s + "'?)";
    throw ConfigError(key, msg);
  }
  try {
    e->set(cfg, value);
  } catch (const ConfigError& err) {
    throw ConfigError(err.key(), where + err.what());
  }
}

void resolve(ExperimentConfig& cfg) {
  if (cfg.granularity_default) {
    cfg.train.strategy.granularity = StrategyConfig::default_granularity(cfg.train.strategy.mode);
  }
}

void require(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

void require_file(const fs::path& p, const std::string& key) {
  require(!p.empty(), key, key + " is required for this dataset");
  require(fs::is_regular_file(p), key, key + ": file not found: " + p.string());
}

fs::path anchor(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> out;
    for (const Entry& e : entries()) out.push_back(e.info);
    return out;
  }();
  return keys;
}

std::string suggest_key(const std::string& unknown) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const Entry& e : entries()) {
    const std::size_t d = edit_distance(unknown, e.info.key);
    if (d < best_d) {
      best_d = d;
      best = e.info.key;
    }
  }
  return best_d <= 3 ? best : std::string();
}

namespace {

ExperimentConfig parse_raw(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", where + "expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key, where + "duplicate key '" + key + "'");
    set_key(cfg, key, value, where);
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg = parse_raw(text, origin);
  resolve(cfg);
  validate_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_raw(ss.str(), path.string());
  // Data paths are relative to the config file.
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  DataConfig& d = cfg.data;
  for (fs::path* p : {&d.train_images, &d.train_labels, &d.test_images, &d.test_labels,
                      &d.train_csv, &d.test_csv}) {
    *p = anchor(*p, base);
  }
  resolve(cfg);
  validate_config(cfg);
  return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("", "override must be key=value, got '" + assignment + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  set_key(cfg, key, trim(assignment.substr(eq + 1)), "--set: ");
  resolve(cfg);
  validate_config(cfg);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out = "# bsdlab resolved config\n";
  for (const Entry& e : entries()) out += e.info.key + " = " + e.get(cfg) + "\n";
  return out;
}

void validate_config(const ExperimentConfig& cfg) {
  require(!cfg.seeds.empty(), "seeds", "seeds must list at least one seed");
  require(cfg.threads >= 1, "threads", "threads must be at least 1");
  const DataConfig& d = cfg.data;
  switch (d.kind) {
    case DatasetKind::kBlobs:
      require(d.blobs.classes >= 2, "classes", "classes must be at least 2");
      require(d.blobs.per_class >= 1, "per_class", "per_class must be at least 1");
      require(d.test_per_class >= 1, "test_per_class", "test_per_class must be at least 1");
      require(d.blobs.dim >= 1, "dim", "dim must be at least 1");
      require(d.blobs.spacing > 0.0, "spacing", "spacing must be positive");
      require(d.blobs.spread > 0.0, "spread", "spread must be positive");
      break;
    case DatasetKind::kIdx:
      require_file(d.train_images, "train_images");
      require_file(d.train_labels, "train_labels");
      require_file(d.test_images, "test_images");
      require_file(d.test_labels, "test_labels");
      break;
    case DatasetKind::kCsv:
      require_file(d.train_csv, "train_csv");
      require_file(d.test_csv, "test_csv");
      break;
  }
  require(cfg.noise.rate >= 0.0 && cfg.noise.rate <= 1.0, "noise_rate",
          "noise_rate must be in [0,1]");
  require(cfg.noise.kind != NoiseKind::kNone || cfg.noise.rate == 0.0, "noise_rate",
          "noise_rate is set but noise = none");
  require(cfg.ood_size >= 1, "ood_size", "ood_size must be at least 1");
  require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout", "dropout must be in [0,1)");
  require(cfg.arch != Architecture::kTinyConv || d.kind == DatasetKind::kIdx, "arch",
          "arch = tiny-conv needs image data (dataset = idx)");
  require(cfg.flip_frames != 1, "flip_frames", "flip_frames must be 0 or at least 2");
  require(cfg.flip_step > 0.0, "flip_step", "flip_step must be positive");
  try {
    cfg.train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.substr(0, msg.find(' ')), msg);
  }
}

fs::path output_root(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv("BSDLAB_OUTPUT_ROOT"); env != nullptr && *env != '\0') {
    return env;
  }
  return cfg.output_dir;
}

fs::path run_directory(const ExperimentConfig& cfg) { return output_root(cfg) / cfg.run_id; }

namespace {

constexpr std::uint64_t kTestTag = 0x7E57;

Dataset make_ood(const ExperimentConfig& cfg, const Dataset& train, const Dataset& test) {
  Dataset ood;
  ood.classes = train.classes;
  ood.image = train.image;
  ood.split = "ood";
  const std::size_t d = train.dim();
  if (cfg.ood == OodKind::kUniform) {
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < train.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        lo[j] = std::min(lo[j], train.samples(i, j));
        hi[j] = std::max(hi[j], train.samples(i, j));
      }
    }
    Rng rng(derive_seed({cfg.ood_seed, 0x00D}));
    ood.samples = Matrix(cfg.ood_size, d);
    for (std::size_t i = 0; i < cfg.ood_size; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double margin = 0.5 * (hi[j] - lo[j]);
        ood.samples(i, j) = rng.uniform(lo[j] - margin, hi[j] + margin);
      }
    }
  } else {
    ood.samples = test.samples;
    for (double& v : ood.samples.data()) v += cfg.ood_shift;
  }
  ood.labels.assign(ood.samples.rows(), 0);
  ood.clean_labels = ood.labels;
  return ood;
}

}  // namespace

Splits build_splits(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Splits s;
  const DataConfig& d = cfg.data;
  switch (d.kind) {
    case DatasetKind::kBlobs: {
      BlobSpec spec = d.blobs;
      s.train = make_blobs(spec);
      spec.per_class = d.test_per_class;
      spec.seed = derive_seed({d.blobs.seed, kTestTag});
      s.test = make_blobs(spec);
      break;
    }
    case DatasetKind::kIdx:
      s.train = load_idx(d.train_images, d.train_labels, d.classes);
      s.test = load_idx(d.test_images, d.test_labels, d.classes);
      break;
    case DatasetKind::kCsv: {
      CsvSchema schema;
      schema.label_column = d.label_column;
      schema.classes = d.classes;
      s.train = load_csv(d.train_csv, schema);
      s.test = load_csv(d.test_csv, schema);
      break;
    }
  }
  if (s.train.dim() != s.test.dim()) {
    throw Error("train and test sets have different feature counts (" +
                std::to_string(s.train.dim()) + " vs " + std::to_string(s.test.dim()) + ")");
  }
  const std::size_t k = std::max(s.train.classes, s.test.classes);
  s.train.classes = s.test.classes = k;
  s.train.split = "train";
  s.test.split = "test";
  if (cfg.noise.kind != NoiseKind::kNone) {
    NoiseSpec noise = cfg.noise;
    if (noise.kind == NoiseKind::kAsymmetric && cfg.cyclic_noise_map) noise.map = cyclic_map(k);
    s.train = apply_noise(s.train, noise);
  }
  if (cfg.ood != OodKind::kNone) s.ood = make_ood(cfg, s.train, s.test);
  return s;
}

ModelSpec model_spec(const ExperimentConfig& cfg, const Dataset& train) {
  ModelSpec spec;
  spec.input_dim = train.dim();
  spec.classes = train.classes;
  spec.hidden = cfg.hidden;
  spec.activation = cfg.activation;
  spec.architecture = cfg.arch;
  spec.dropout = cfg.dropout;
  spec.image = train.image;
  spec.validate();
  return spec;
}

ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  Splits s = build_splits(cfg);
  ExperimentSetup setup;
  setup.run_id = cfg.run_id;
  setup.model = model_spec(cfg, s.train);
  setup.train = cfg.train;
  setup.train_set = std::move(s.train);
  setup.test_set = std::move(s.test);
  setup.ood_set = std::move(s.ood);
  setup.trace_every = cfg.trace_every;
  setup.flip_frames = cfg.flip_frames;
  setup.flip_step = cfg.flip_step;
  setup.checkpoint_every = cfg.checkpoint_every;
  setup.seeds = cfg.seeds;
  setup.run_dir = run_directory(cfg);
  setup.config_text = serialize_config(cfg);
  setup.threads = cfg.threads;
  return setup;
}

}  // namespace bsdlab::cli
