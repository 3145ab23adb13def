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

#include "bsdlab/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "bsdlab/analysis.hpp"
#include "bsdlab/cli/config.hpp"
#include "bsdlab/data.hpp"
#include "bsdlab/error.hpp"
#include "bsdlab/training.hpp"
#include "json.hpp"

namespace bsdlab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

ExperimentConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = parse_config(path);
  for (const std::string& o : overrides) apply_override(cfg, o);
  return cfg;
}

std::ofstream open_report(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw Error(path.string() + " already exists; pass --force to overwrite");
  }
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  return out;
}

fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed) {
  return run_dir / "traces" / ("seed-" + std::to_string(seed));
}

std::string rel(const fs::path& run_dir, const fs::path& p) {
  return p.lexically_relative(run_dir).string();
}

struct SeedTrace {
  std::uint64_t seed;
  std::size_t epoch;
  Trace trace;
};

SeedTrace final_trace(const fs::path& run_dir, std::uint64_t seed, const std::string& what) {
  const auto traces = epoch_traces(run_dir, seed);
  if (traces.empty()) {
    throw Error(what + " needs a prediction trace: missing " +
                rel(run_dir, seed_dir(run_dir, seed) / "epoch-<t>.csv") +
                " (set trace_every > 0 in the config)");
  }
  return {seed, traces.back().first, read_trace(traces.back().second)};
}

std::vector<std::uint64_t> selected_seeds(const AnalyzeOptions& opts) {
  std::vector<std::uint64_t> seeds = run_seeds(opts.run_dir);
  if (seeds.empty()) {
    throw Error(opts.run_dir.string() + " has no run records (records/seed-<s>.jsonl)");
  }
  if (opts.seed) {
    if (std::find(seeds.begin(), seeds.end(), *opts.seed) == seeds.end()) {
      throw Error("seed " + std::to_string(*opts.seed) + " is not part of " +
                  opts.run_dir.string());
    }
    return {*opts.seed};
  }
  return seeds;
}

void analyze_calibration(const AnalyzeOptions& opts, std::ostream& out) {
  const fs::path reports = opts.run_dir / "reports";
  std::vector<std::pair<SeedTrace, CalibrationReport>> rows;
  for (std::uint64_t seed : selected_seeds(opts)) {
    SeedTrace t = final_trace(opts.run_dir, seed, "calibration");
    CalibrationReport r = calibration_report(t.trace.probs, t.trace.labels);
    rows.emplace_back(std::move(t), std::move(r));
  }
  std::ofstream csv = open_report(reports / "calibration.csv", opts.force);
  csv << "seed,epoch,accuracy,ece,sce,ace,nll\n";
  out << "seed   epoch  accuracy  ece       sce       ace       nll\n";
  for (const auto& [t, r] : rows) {
    csv << t.seed << ',' << t.epoch << ',' << fmt17(r.accuracy) << ',' << fmt17(r.ece) << ','
        << fmt17(r.sce) << ',' << fmt17(r.ace) << ',' << fmt17(r.nll) << '\n';
    char line[160];
    std::snprintf(line, sizeof(line), "%-6llu %-6zu %-9.4f %-9.4f %-9.4f %-9.4f %.4f\n",
                  static_cast<unsigned long long>(t.seed), t.epoch, r.accuracy, r.ece, r.sce,
                  r.ace, r.nll);
    out << line;
    json bins = json::array();
    for (const ReliabilityBin& b : r.reliability) {
      bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"confidence", b.confidence},
                      {"accuracy", b.accuracy}, {"count", b.count}});
    }
    json report = {{"seed", t.seed}, {"epoch", t.epoch},   {"accuracy", r.accuracy},
                   {"ece", r.ece},   {"sce", r.sce},       {"ace", r.ace},
                   {"nll", r.nll},   {"bins", r.bins},     {"reliability", bins}};
    std::ofstream js =
        open_report(reports / ("calibration-seed-" + std::to_string(t.seed) + ".json"), opts.force);
    js << report.dump(2) << '\n';
    std::ofstream rb = open_report(
        reports / ("reliability-seed-" + std::to_string(t.seed) + ".csv"), opts.force);
    rb << "bin_lo,bin_hi,conf,acc,count\n";
    for (const ReliabilityBin& b : r.reliability) {
      rb << fmt17(b.lower) << ',' << fmt17(b.upper) << ',' << fmt17(b.confidence) << ','
         << fmt17(b.accuracy) << ',' << b.count << '\n';
    }
  }
}

void analyze_dark_knowledge(const AnalyzeOptions& opts, std::ostream& out) {
  const fs::path reports = opts.run_dir / "reports";
  for (std::uint64_t seed : selected_seeds(opts)) {
    const SeedTrace t = final_trace(opts.run_dir, seed, "dark-knowledge");
    const std::size_t k = t.trace.probs.cols();
    const Matrix mu = mu_matrix(t.trace.probs, t.trace.labels, k);
    const DarkKnowledge dk = delta_decomposition(t.trace.probs, t.trace.labels, mu);
    const std::string s = std::to_string(seed);
    std::ofstream mcsv = open_report(reports / ("mu-seed-" + s + ".csv"), opts.force);
    mcsv << "class";
    for (std::size_t c = 0; c < k; ++c) mcsv << ",mu_" << c;
    mcsv << '\n';
    for (std::size_t i = 0; i < k; ++i) {
      mcsv << i;
      for (std::size_t j = 0; j < k; ++j) mcsv << ',' << fmt17(mu(i, j));
      mcsv << '\n';
    }
    std::ofstream lcsv = open_report(reports / ("mu-log10-seed-" + s + ".csv"), opts.force);
    lcsv << "class";
    for (std::size_t c = 0; c < k; ++c) lcsv << ",log10_mu_" << c;
    lcsv << '\n';
    for (std::size_t i = 0; i < k; ++i) {
      lcsv << i;
      for (std::size_t j = 0; j < k; ++j) {
        lcsv << ',' << fmt17(std::log10(std::max(mu(i, j), kProbFloor)));
      }
      lcsv << '\n';
    }
    std::ofstream dcsv = open_report(reports / ("delta-seed-" + s + ".csv"), opts.force);
    dcsv << "sample_id,label,magnitude";
    for (std::size_t c = 0; c < k; ++c) dcsv << ",delta_" << c;
    dcsv << '\n';
    for (std::size_t i = 0; i < dk.delta.rows(); ++i) {
      dcsv << i << ',' << t.trace.labels[i] << ',' << fmt17(dk.magnitudes[i]);
      for (double v : dk.delta.row(i)) dcsv << ',' << fmt17(v);
      dcsv << '\n';
    }
    out << "seed " << seed << " epoch " << t.epoch << " mean |delta| per class:";
    for (double m : dk.class_mean_magnitude) out << ' ' << fmt(m, 4);
    out << "; mu row sums:";
    for (double m : dk.mu_row_sums) out << ' ' << fmt(m, 4);
    out << '\n';
  }
}

void analyze_dynamics(const AnalyzeOptions& opts, std::ostream& out) {
  const fs::path reports = opts.run_dir / "reports";
  for (std::uint64_t seed : selected_seeds(opts)) {
    const auto traces = epoch_traces(opts.run_dir, seed);
    if (traces.size() < 2) {
      throw Error("dynamics needs at least two prediction traces: found " +
                  std::to_string(traces.size()) + " " +
                  rel(opts.run_dir, seed_dir(opts.run_dir, seed) / "epoch-<t>.csv") +
                  " (set trace_every > 0 and below epochs in the config)");
    }
    const Trace final = read_trace(traces.back().second);
    const double t_final = fit_temperature(surrogate_logits(final.probs), final.labels);
    std::ofstream csv =
        open_report(reports / ("dynamics-seed-" + std::to_string(seed) + ".csv"), opts.force);
    csv << "epoch,temperature,final_temperature,kl,temp_adjusted_kl,final_t_adjusted_kl\n";
    out << "seed " << seed << " (final epoch " << traces.back().first << ")\n";
    for (std::size_t i = 0; i + 1 < traces.size(); ++i) {
      const Trace snap = read_trace(traces[i].second);
      if (!snap.probs.same_shape(final.probs)) {
        throw Error(traces[i].second.string() + " does not match the final trace shape");
      }
      const double t_snap = fit_temperature(surrogate_logits(snap.probs), snap.labels);
      const double raw = temp_adjusted_kl(snap.probs, final.probs, 1.0, 1.0);
      const double adj = temp_adjusted_kl(snap.probs, final.probs, t_snap, t_final);
      const double once = temp_adjusted_kl(snap.probs, final.probs, t_final, t_final);
      csv << traces[i].first << ',' << fmt17(t_snap) << ',' << fmt17(t_final) << ','
          << fmt17(raw) << ',' << fmt17(adj) << ',' << fmt17(once) << '\n';
      out << "  epoch " << traces[i].first << " temp-adjusted KL " << fmt(adj) << '\n';
    }
  }
}

void analyze_ood(const AnalyzeOptions& opts, std::ostream& out) {
  std::vector<std::pair<std::uint64_t, double>> rows;
  for (std::uint64_t seed : selected_seeds(opts)) {
    const fs::path ood_path = seed_dir(opts.run_dir, seed) / "ood-final.csv";
    if (!fs::exists(ood_path)) {
      throw Error("ood needs two trace sets: missing " + rel(opts.run_dir, ood_path) +
                  " (set ood = uniform or ood = shifted in the config)");
    }
    const SeedTrace id = final_trace(opts.run_dir, seed, "ood");
    const Trace ood = read_trace(ood_path);
    const double a = auroc(max_probability(id.trace.probs), max_probability(ood.probs));
    rows.emplace_back(seed, a);
    out << "seed " << seed << " AUROC (max probability) " << fmt(a, 4) << '\n';
  }
  std::ofstream csv = open_report(opts.run_dir / "reports" / "ood.csv", opts.force);
  csv << "seed,auroc\n";
  for (const auto& [s, a] : rows) csv << s << ',' << fmt17(a) << '\n';
}

void analyze_flip(const AnalyzeOptions& opts, std::ostream& out) {
  std::vector<std::pair<std::uint64_t, double>> rows;
  for (std::uint64_t seed : selected_seeds(opts)) {
    const fs::path p = seed_dir(opts.run_dir, seed) / "flip-final.csv";
    if (!fs::exists(p)) {
      throw Error("flip needs perturbation sequences: missing " + rel(opts.run_dir, p) +
                  " (set flip_frames >= 2 in the config)");
    }
    const double m = mean_flip_probability(read_flip_trace(p));
    rows.emplace_back(seed, m);
    out << "seed " << seed << " mean flip probability " << fmt(m, 4) << '\n';
  }
  std::ofstream csv = open_report(opts.run_dir / "reports" / "flip.csv", opts.force);
  csv << "seed,mean_flip_probability\n";
  for (const auto& [s, m] : rows) csv << s << ',' << fmt17(m) << '\n';
}

std::string config_value(const std::string& text, const std::string& key) {
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string k = line.substr(0, eq);
    k.erase(k.find_last_not_of(" \t") + 1);
    if (k != key) continue;
    std::string v = line.substr(eq + 1);
    v.erase(0, v.find_first_not_of(" \t"));
    return v;
  }
  return "";
}

struct RunSummary {
  std::string run;
  std::string method;
  std::size_t classes = 0;
  std::size_t seeds = 0;
  std::map<std::string, std::vector<double>> metrics;
};

const std::vector<std::string> kCompareMetrics = {"accuracy", "ece", "nll"};

RunSummary summarize_run(const fs::path& dir) {
  const std::vector<std::uint64_t> seeds = run_seeds(dir);
  if (seeds.empty()) throw Error(dir.string() + " has no run records (records/seed-<s>.jsonl)");
  RunSummary s;
  s.seeds = seeds.size();
  for (std::uint64_t seed : seeds) {
    const fs::path p = dir / "records" / ("seed-" + std::to_string(seed) + ".jsonl");
    std::ifstream in(p);
    std::string line;
    bool header = true;
    std::optional<json> final;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        throw FormatError(FormatError::Kind::kBadValue, p.string() + ": malformed line");
      }
      if (header) {
        if (j.value("schema", "") != kRunRecordSchema) {
          throw FormatError(FormatError::Kind::kBadMagic, p.string() + ": not a run record");
        }
        const std::size_t k = j.value("classes", std::size_t{0});
        if (s.classes != 0 && k != s.classes) {
          throw Error(p.string() + ": class count differs between seeds");
        }
        s.classes = k;
        s.run = j.value("run_id", dir.filename().string());
        s.method = config_value(j.value("config", ""), "mode");
        if (config_value(j.value("config", ""), "bsd_plus") == "true") s.method += "+";
        header = false;
      } else if (j.value("type", "") == "final") {
        final = j;
      }
    }
    for (const std::string& m : kCompareMetrics) {
      const std::string key = "test_" + m;
      if (final && final->contains(key) && (*final)[key].is_number()) {
        s.metrics[m].push_back((*final)[key].get<double>());
      }
    }
  }
  if (s.method.empty()) s.method = "?";
  return s;
}

}  // namespace

std::vector<std::uint64_t> run_seeds(const fs::path& run_dir) {
  std::vector<std::uint64_t> seeds;
  const fs::path records = run_dir / "records";
  if (!fs::is_directory(records)) return seeds;
  static const std::regex pattern(R"(seed-(\d+)\.jsonl)");
  for (const auto& entry : fs::directory_iterator(records)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) seeds.push_back(std::stoull(m[1].str()));
  }
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

std::vector<std::pair<std::size_t, fs::path>> epoch_traces(const fs::path& run_dir,
                                                           std::uint64_t seed) {
  std::vector<std::pair<std::size_t, fs::path>> out;
  const fs::path dir = seed_dir(run_dir, seed);
  if (!fs::is_directory(dir)) return out;
  static const std::regex pattern(R"(epoch-(\d+)\.csv)");
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) out.emplace_back(std::stoull(m[1].str()), entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(opts.config, opts.overrides);
    if (opts.dry_run) {
      out << serialize_config(cfg);
      return 0;
    }
    if (opts.force && opts.resume) throw Error("--force and --resume are exclusive");
    const fs::path dir = run_directory(cfg);
    if (fs::exists(dir)) {
      if (opts.resume) {
        std::ifstream in(dir / "config.resolved");
        std::stringstream ss;
        ss << in.rdbuf();
        if (ss.str() != serialize_config(cfg)) {
          throw Error("cannot resume " + dir.string() + ": its config.resolved differs");
        }
      } else if (opts.force) {
        fs::remove_all(dir);
      } else {
        throw Error("run directory " + dir.string() +
                    " already exists; pass --force to overwrite or --resume to continue");
      }
    }
    ExperimentSetup setup = make_setup(cfg);
    setup.resume = opts.resume;
    setup.progress = [&out](const std::string& line) { out << line << '\n' << std::flush; };
    const std::vector<RunRecord> records = run_experiment(setup);
    for (const RunRecord& r : records) {
      const CalibrationReport& f = r.final_report;
      char line[200];
      std::snprintf(line, sizeof(line),
                    "seed %llu done: accuracy %.4f ece %.4f nll %.4f (%.1fs)\n",
                    static_cast<unsigned long long>(r.seed), f.accuracy, f.ece, f.nll,
                    r.wall_seconds);
      out << line;
    }
    out << "records written to " << (dir / "records").string() << '\n';
    return 0;
  });
}

int cmd_analyze(const AnalyzeOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::is_directory(opts.run_dir)) {
      throw Error("run directory " + opts.run_dir.string() + " does not exist");
    }
    if (opts.what == "calibration") {
      analyze_calibration(opts, out);
    } else if (opts.what == "dark-knowledge") {
      analyze_dark_knowledge(opts, out);
    } else if (opts.what == "dynamics") {
      analyze_dynamics(opts, out);
    } else if (opts.what == "ood") {
      analyze_ood(opts, out);
    } else if (opts.what == "flip") {
      analyze_flip(opts, out);
    } else {
      throw Error("unknown analysis '" + opts.what +
                  "' (expected calibration, dark-knowledge, dynamics, ood or flip)");
    }
    return 0;
  });
}

int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.runs.size() < 2) throw Error("compare needs at least two run directories");
    std::vector<RunSummary> runs;
    for (const fs::path& dir : opts.runs) runs.push_back(summarize_run(dir));
    for (const RunSummary& r : runs) {
      if (r.classes != runs.front().classes) {
        throw Error("incompatible runs: " + runs.front().run + " has " +
                    std::to_string(runs.front().classes) + " classes, " + r.run + " has " +
                    std::to_string(r.classes));
      }
      if (r.seeds == 1) {
        err << "warning: " << r.run << " has a single seed; std reported as 0\n";
      }
    }
    auto cell = [](const std::vector<double>* v, bool csv) -> std::pair<std::string, std::string> {
      if (v == nullptr || v->empty()) return {"absent", "absent"};
      double mean = 0.0;
      for (double x : *v) mean += x;
      mean /= static_cast<double>(v->size());
      double var = 0.0;
      for (double x : *v) var += (x - mean) * (x - mean);
      const double sd = v->size() > 1 ? std::sqrt(var / static_cast<double>(v->size() - 1)) : 0.0;
      return csv ? std::pair{fmt17(mean), fmt17(sd)} : std::pair{fmt(mean, 4), fmt(sd, 4)};
    };
    fs::create_directories(opts.csv.has_parent_path() ? opts.csv.parent_path() : fs::path("."));
    std::ofstream csv(opts.csv);
    if (!csv) throw FormatError(FormatError::Kind::kIo, "cannot write " + opts.csv.string());
    csv << "method,run,seeds";
    for (const std::string& m : kCompareMetrics) csv << ',' << m << "_mean," << m << "_std";
    csv << '\n';

    std::vector<std::vector<std::string>> table;
    table.push_back({"method", "run", "seeds"});
    for (const std::string& m : kCompareMetrics) table.front().push_back(m);
    for (const RunSummary& r : runs) {
      csv << r.method << ',' << r.run << ',' << r.seeds;
      std::vector<std::string> row = {r.method, r.run, std::to_string(r.seeds)};
      for (const std::string& m : kCompareMetrics) {
        const auto it = r.metrics.find(m);
        const std::vector<double>* v = it == r.metrics.end() ? nullptr : &it->second;
        const auto [mean_c, sd_c] = cell(v, true);
        csv << ',' << mean_c << ',' << sd_c;
        const auto [mean_t, sd_t] = cell(v, false);
        row.push_back(mean_t == "absent" ? mean_t : mean_t + " +- " + sd_t);
      }
      csv << '\n';
      table.push_back(std::move(row));
    }
    std::vector<std::size_t> width(table.front().size(), 0);
    for (const auto& row : table) {
      for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    for (const auto& row : table) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        out << row[c];
        if (c + 1 < row.size()) out << std::string(width[c] - row[c].size() + 2, ' ');
      }
      out << '\n';
    }
    out << "csv written to " << opts.csv.string() << '\n';
    return 0;
  });
}

int cmd_export_dataset(const ExportOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.format != "csv" && opts.format != "idx") {
      throw Error("--format must be csv or idx, got '" + opts.format + "'");
    }
    if (opts.out_dir.empty()) throw Error("--out is required");
    const ExperimentConfig cfg = load_config(opts.config, opts.overrides);
    const Splits splits = build_splits(cfg);
    std::vector<std::pair<std::string, const Dataset*>> sets = {{"train", &splits.train},
                                                                {"test", &splits.test}};
    if (splits.ood) sets.emplace_back("ood", &*splits.ood);
    std::vector<fs::path> targets;
    for (const auto& [name, data] : sets) {
      if (opts.format == "csv") {
        targets.push_back(opts.out_dir / (name + ".csv"));
      } else {
        targets.push_back(opts.out_dir / (name + "-images.idx"));
        targets.push_back(opts.out_dir / (name + "-labels.idx"));
      }
    }
    for (const fs::path& t : targets) {
      if (fs::exists(t) && !opts.force) {
        throw Error(t.string() + " already exists; pass --force to overwrite");
      }
    }
    fs::create_directories(opts.out_dir);
    for (const auto& [name, data] : sets) {
      if (opts.format == "csv") {
        write_csv(*data, opts.out_dir / (name + ".csv"));
      } else {
        write_idx(*data, opts.out_dir / (name + "-images.idx"),
                  opts.out_dir / (name + "-labels.idx"));
      }
      out << name << ": " << data->size() << " samples, " << data->dim() << " features, "
          << data->classes << " classes\n";
    }
    return 0;
  });
}

}  // namespace bsdlab::cli
