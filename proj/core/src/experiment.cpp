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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>

#include "bsdlab/checkpoint.hpp"
#include "bsdlab/error.hpp"
#include "bsdlab/random.hpp"
#include "bsdlab/training.hpp"
#include "json.hpp"

namespace bsdlab {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::uint64_t kModelSeedTag = 0x30DE1;
constexpr std::uint64_t kFlipTag = 0xF11B;
constexpr std::size_t kEvalChunk = 1024;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot write " + path.string());
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json header_json(const RunRecord& r) {
  return {{"schema", kRunRecordSchema}, {"version", kRunRecordVersion},
          {"type", "header"},           {"run_id", r.run_id},
          {"seed", r.seed},             {"classes", r.classes},
          {"config", r.config_text}};
}

json epoch_json(const EpochRecord& e) {
  json j = {{"type", "epoch"},
            {"epoch", e.stats.epoch},
            {"lr", e.stats.lr},
            {"train_loss", e.stats.train_loss},
            {"train_kl", e.stats.train_kl},
            {"contrastive", e.stats.contrastive},
            {"mean_target_entropy", e.stats.mean_target_entropy},
            {"mean_evidence", e.stats.mean_evidence}};
  if (e.eval) {
    j["test_accuracy"] = e.eval->accuracy;
    j["test_ece"] = e.eval->ece;
    j["test_nll"] = e.eval->nll;
  }
  return j;
}

json final_json(const RunRecord& r, std::size_t epochs) {
  const CalibrationReport& f = r.final_report;
  return {{"type", "final"},     {"epochs", epochs},     {"test_accuracy", f.accuracy},
          {"test_ece", f.ece},   {"test_sce", f.sce},    {"test_ace", f.ace},
          {"test_nll", f.nll},   {"bins", f.bins}};
}

void write_records(const fs::path& path, const RunRecord& r, bool finished) {
  std::ofstream out = open_out(path);
  out << header_json(r).dump() << '\n';
  for (const EpochRecord& e : r.epochs) out << epoch_json(e).dump() << '\n';
  if (finished) out << final_json(r, r.epochs.size()).dump() << '\n';
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed: " + path.string());
}

EpochRecord parse_epoch(const json& j) {
  EpochRecord e;
  e.stats.epoch = j.at("epoch").get<std::size_t>();
  e.stats.lr = j.at("lr").get<double>();
  e.stats.train_loss = j.at("train_loss").get<double>();
  e.stats.train_kl = j.at("train_kl").get<double>();
  e.stats.contrastive = j.at("contrastive").get<double>();
  e.stats.mean_target_entropy = j.at("mean_target_entropy").get<double>();
  e.stats.mean_evidence = j.at("mean_evidence").get<double>();
  if (j.contains("test_accuracy")) {
    e.eval = EvalMetrics{j.at("test_accuracy").get<double>(), j.at("test_ece").get<double>(),
                         j.at("test_nll").get<double>()};
  }
  return e;
}

struct RunPaths {
  fs::path records, store, model, state, traces;
};

RunPaths paths_for(const fs::path& dir, std::uint64_t seed) {
  const std::string s = std::to_string(seed);
  return {dir / "records" / ("seed-" + s + ".jsonl"),
          dir / "records" / ("store-seed-" + s + ".csv"),
          dir / "checkpoints" / ("seed-" + s + ".ckpt"),
          dir / "checkpoints" / ("seed-" + s + "-state.ckpt"),
          dir / "traces" / ("seed-" + s)};
}

std::string progress_line(const RunRecord& r, const EpochRecord& e, std::size_t total,
                          double seconds) {
  char buf[256];
  int len = std::snprintf(buf, sizeof(buf), "seed %llu epoch %zu/%zu loss %.4f lr %.4g",
                          static_cast<unsigned long long>(r.seed), e.stats.epoch, total,
                          e.stats.train_loss, e.stats.lr);
  if (e.eval && len > 0) {
    len += std::snprintf(buf + len, sizeof(buf) - static_cast<std::size_t>(len),
                         " acc %.4f ece %.4f", e.eval->accuracy, e.eval->ece);
  }
  if (len > 0) {
    std::snprintf(buf + len, sizeof(buf) - static_cast<std::size_t>(len), " (%.1fs)", seconds);
  }
  return buf;
}

RunRecord run_one(const ExperimentSetup& setup, std::uint64_t seed,
                  const std::function<void(const std::string&)>& progress) {
  const auto started = std::chrono::steady_clock::now();
  ModelSpec spec = setup.model;
  spec.seed = model_seed_for(seed);
  Trainer trainer(spec, setup.train, setup.train_set, seed);
  const bool persist = !setup.run_dir.empty();
  const RunPaths paths = persist ? paths_for(setup.run_dir, seed) : RunPaths{};
  const std::size_t total = setup.train.epochs;

  RunRecord record;
  record.seed = seed;
  record.run_id = setup.run_id;
  record.classes = setup.train_set.classes;
  record.config_text = setup.config_text;

  if (persist) {
    fs::create_directories(paths.model.parent_path());
    fs::create_directories(paths.records.parent_path());
  }

  if (persist && setup.resume && fs::exists(paths.state)) {
    trainer.load_state(paths.state);
    if (trainer.epochs_completed() > 0) {
      if (!fs::exists(paths.records)) {
        throw Error("resume: " + paths.state.string() + " exists but " +
                    paths.records.string() + " is missing");
      }
      RunRecord previous = read_run_record(paths.records);
      for (EpochRecord& e : previous.epochs) {
        if (e.stats.epoch <= trainer.epochs_completed()) record.epochs.push_back(std::move(e));
      }
      if (record.epochs.size() != trainer.epochs_completed()) {
        throw Error("resume: " + paths.records.string() + " holds " +
                    std::to_string(record.epochs.size()) + " epochs, checkpoint is at epoch " +
                    std::to_string(trainer.epochs_completed()));
      }
    }
  }

  const std::vector<int>& test_labels = setup.test_set.labels;
  Matrix probs;
  while (trainer.epochs_completed() < total) {
    EpochRecord rec{trainer.train_epoch(), std::nullopt};
    const std::size_t t = trainer.epochs_completed();
    const bool last = t == total;
    const bool eval_now = last || t % setup.train.eval_every == 0;
    const bool trace_now =
        persist && setup.trace_every > 0 && (last || t % setup.trace_every == 0);
    if (eval_now || trace_now) probs = evaluate(trainer.model(), setup.test_set.samples);
    if (eval_now) {
      rec.eval = EvalMetrics{accuracy(probs, test_labels),
                             ece(probs, test_labels, setup.train.bins),
                             nll(probs, test_labels)};
    }
    if (trace_now) {
      write_trace(paths.traces / ("epoch-" + std::to_string(t) + ".csv"), probs, test_labels);
    }
    record.epochs.push_back(rec);
    if (progress) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      progress(progress_line(record, rec, total, secs));
    }
    if (persist && setup.checkpoint_every > 0 && !last && t % setup.checkpoint_every == 0) {
      trainer.save_state(paths.state);
      write_records(paths.records, record, false);
    }
  }
  if (probs.empty()) probs = evaluate(trainer.model(), setup.test_set.samples);
  record.final_report = calibration_report(probs, test_labels, setup.train.bins);

  if (persist) {
    write_records(paths.records, record, true);
    trainer.strategy().store().write_csv(paths.store);
    save_model(paths.model, trainer.model());
    trainer.save_state(paths.state);
    if (setup.ood_set) {
      const Matrix ood = evaluate(trainer.model(), setup.ood_set->samples);
      write_trace(paths.traces / "ood-final.csv", ood, setup.ood_set->labels);
    }
    if (setup.flip_frames > 0) {
      write_flip_trace(paths.traces / "flip-final.csv",
                       flip_sequences(trainer.model(), setup.test_set.samples,
                                      setup.flip_frames, setup.flip_step,
                                      derive_seed({seed, kFlipTag})));
    }
  }
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return record;
}

}  // namespace

std::uint64_t model_seed_for(std::uint64_t run_seed) {
  return derive_seed({run_seed, kModelSeedTag});
}

Matrix evaluate(const Model& model, const Matrix& samples) {
  Matrix out(samples.rows(), model.spec().classes);
  std::vector<std::size_t> ids;
  for (std::size_t start = 0; start < samples.rows(); start += kEvalChunk) {
    const std::size_t stop = std::min(samples.rows(), start + kEvalChunk);
    ids.resize(stop - start);
    for (std::size_t i = start; i < stop; ++i) ids[i - start] = i;
    const Matrix p = predict(model, gather_rows(samples, ids));
    std::copy(p.data().begin(), p.data().end(), out.row(start).begin());
  }
  return out;
}

std::vector<std::vector<std::size_t>> flip_sequences(const Model& model, const Matrix& samples,
                                                     std::size_t frames, double step,
                                                     std::uint64_t seed) {
  if (frames < 2) throw Error("perturbation sequences need at least 2 frames");
  const std::size_t n = samples.rows();
  const std::size_t d = samples.cols();
  Matrix direction(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed({seed, i}));
    for (double& v : direction.row(i)) v = rng.normal();
  }
  std::vector<std::vector<std::size_t>> seq(n, std::vector<std::size_t>(frames));
  Matrix frame(n, d);
  for (std::size_t f = 0; f < frames; ++f) {
    const double scale = static_cast<double>(f) * step;
    for (std::size_t j = 0; j < frame.size(); ++j) {
      frame.data()[j] = samples.data()[j] + scale * direction.data()[j];
    }
    const Matrix p = evaluate(model, frame);
    for (std::size_t i = 0; i < n; ++i) seq[i][f] = argmax(p.row(i));
  }
  return seq;
}

void write_trace(const fs::path& path, const Matrix& probs, std::span<const int> labels) {
  if (labels.size() != probs.rows()) throw Error("trace: label count differs from row count");
  std::ofstream out = open_out(path);
  out << "sample_id,label";
  for (std::size_t c = 0; c < probs.cols(); ++c) out << ",p_" << c;
  out << '\n';
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out << i << ',' << labels[i];
    for (double v : probs.row(i)) out << ',' << fmt17(v);
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed: " + path.string());
}

Trace read_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,label", 0) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, path.string() + ": not a prediction trace");
  }
  const std::size_t k = split(line, ',').size() - 2;
  Trace trace;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != k + 2) {
      throw FormatError(FormatError::Kind::kRowMismatch,
                        path.string() + ": row " + std::to_string(row + 1) + " has " +
                            std::to_string(f.size()) + " fields, expected " +
                            std::to_string(k + 2));
    }
    try {
      trace.labels.push_back(std::stoi(f[1]));
      for (std::size_t c = 0; c < k; ++c) values.push_back(std::stod(f[c + 2]));
    } catch (const std::logic_error&) {
      throw FormatError(FormatError::Kind::kBadValue,
                        path.string() + ": bad number on row " + std::to_string(row + 1));
    }
    ++row;
  }
  trace.probs = Matrix(row, k, std::move(values));
  return trace;
}

void write_flip_trace(const fs::path& path,
                      const std::vector<std::vector<std::size_t>>& sequences) {
  std::ofstream out = open_out(path);
  const std::size_t frames = sequences.empty() ? 0 : sequences.front().size();
  out << "sample_id";
  for (std::size_t f = 0; f < frames; ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].size() != frames) throw Error("flip trace: ragged sequences");
    out << i;
    for (std::size_t v : sequences[i]) out << ',' << v;
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::kIo, "write failed: " + path.string());
}

std::vector<std::vector<std::size_t>> read_flip_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open flip trace " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id", 0) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, path.string() + ": not a flip trace");
  }
  std::vector<std::vector<std::size_t>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    std::vector<std::size_t> seq;
    try {
      for (std::size_t j = 1; j < f.size(); ++j) seq.push_back(std::stoull(f[j]));
    } catch (const std::logic_error&) {
      throw FormatError(FormatError::Kind::kBadValue,
                        path.string() + ": bad class index on row " +
                            std::to_string(out.size() + 1));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

RunRecord read_run_record(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open run record " + path.string());
  RunRecord r;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      throw FormatError(FormatError::Kind::kBadValue,
                        path.string() + ": line " + std::to_string(lineno) + " is not JSON");
    }
    try {
      const std::string type = j.value("type", "");
      if (!have_header) {
        if (j.value("schema", "") != kRunRecordSchema) {
          throw FormatError(FormatError::Kind::kBadMagic,
                            path.string() + ": not a run record");
        }
        if (j.value("version", 0) != kRunRecordVersion) {
          throw FormatError(FormatError::Kind::kBadValue,
                            path.string() + ": unsupported run record version " +
                                std::to_string(j.value("version", 0)));
        }
        r.seed = j.at("seed").get<std::uint64_t>();
        r.run_id = j.at("run_id").get<std::string>();
        r.classes = j.at("classes").get<std::size_t>();
        r.config_text = j.at("config").get<std::string>();
        have_header = true;
      } else if (type == "epoch") {
        r.epochs.push_back(parse_epoch(j));
      } else if (type == "final") {
        CalibrationReport& f = r.final_report;
        f.accuracy = j.at("test_accuracy").get<double>();
        f.ece = j.at("test_ece").get<double>();
        f.sce = j.at("test_sce").get<double>();
        f.ace = j.at("test_ace").get<double>();
        f.nll = j.at("test_nll").get<double>();
        f.bins = j.at("bins").get<std::size_t>();
      }
    } catch (const json::exception& e) {
      throw FormatError(FormatError::Kind::kBadValue, path.string() + ": line " +
                                                         std::to_string(lineno) + ": " +
                                                         e.what());
    }
  }
  if (!have_header) throw FormatError(FormatError::Kind::kTruncated, path.string() + " is empty");
  return r;
}

std::vector<RunRecord> run_experiment(const ExperimentSetup& setup) {
  if (setup.seeds.empty()) throw Error("experiment needs at least one seed");
  setup.train.validate();
  if (setup.test_set.classes != setup.train_set.classes) {
    throw Error("test set has " + std::to_string(setup.test_set.classes) +
                " classes, training set has " + std::to_string(setup.train_set.classes));
  }
  if (!setup.run_dir.empty()) {
    fs::create_directories(setup.run_dir / "records");
    std::ofstream cfg = open_out(setup.run_dir / "config.resolved");
    cfg << setup.config_text;
  }

  std::mutex mu;
  std::function<void(const std::string&)> progress;
  if (setup.progress) {
    progress = [&](const std::string& line) {
      std::lock_guard<std::mutex> lock(mu);
      setup.progress(line);
    };
  }

  std::vector<RunRecord> out(setup.seeds.size());
  std::vector<std::exception_ptr> errors(setup.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < setup.seeds.size(); i = next++) {
      try {
        out[i] = run_one(setup, setup.seeds[i], progress);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(setup.threads, 1, setup.seeds.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace bsdlab
