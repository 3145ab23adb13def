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

#include "bsdlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "bsdlab/error.hpp"

namespace bsdlab {

namespace {

constexpr const char* kMagic = "bsdlab-checkpoint";

[[noreturn]] void fail(FormatError::Kind kind, const std::filesystem::path& path,
                       const std::string& what) {
  throw FormatError(kind, path.string() + ": " + what);
}

std::string join_sizes(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out.empty() ? "-" : out;
}

std::vector<std::size_t> split_sizes(const std::string& text) {
  std::vector<std::size_t> values;
  if (text == "-") return values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stoul(item));
  return values;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::string* Container::find(const std::string& key) const {
  for (const auto& [k, v] : header) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& Container::get(const std::string& key) const {
  const std::string* v = find(key);
  if (v == nullptr) throw Error("checkpoint: missing header key '" + key + "'");
  return *v;
}

const Matrix& Container::block(const std::string& name) const {
  for (const auto& [n, m] : blocks) {
    if (n == name) return m;
  }
  throw Error("checkpoint: missing block '" + name + "'");
}

void write_container(const std::filesystem::path& path, const Container& container) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(FormatError::Kind::kIo, path, "cannot open for writing");
  out << kMagic << '\n' << "format_version " << kCheckpointVersion << '\n';
  for (const auto& [key, value] : container.header) {
    if (key.find_first_of(" \n") != std::string::npos ||
        value.find('\n') != std::string::npos) {
      throw Error("checkpoint: header entries must be single-line, key without spaces");
    }
    out << key << ' ' << value << '\n';
  }
  out << "blocks " << container.blocks.size() << '\n';
  for (const auto& [name, m] : container.blocks) {
    out << "block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  }
  out << "end\n";
  for (const auto& [name, m] : container.blocks) {
    for (double v : m.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
      out.write(bytes, 8);
    }
  }
  if (!out) fail(FormatError::Kind::kIo, path, "write failed");
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(FormatError::Kind::kIo, path, "cannot open for reading");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    fail(FormatError::Kind::kBadMagic, path, "not a bsdlab checkpoint");
  }
  if (!std::getline(in, line) ||
      line != "format_version " + std::to_string(kCheckpointVersion)) {
    fail(FormatError::Kind::kBadMagic, path, "unsupported checkpoint version: " + line);
  }

  Container container;
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> manifest;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto space = line.find(' ');
    const std::string key = line.substr(0, space);
    const std::string value = space == std::string::npos ? "" : line.substr(space + 1);
    if (key == "blocks") continue;
    if (key == "block") {
      std::istringstream ss(value);
      std::string name;
      std::size_t rows = 0, cols = 0;
      if (!(ss >> name >> rows >> cols)) {
        fail(FormatError::Kind::kBadValue, path, "malformed block line: " + line);
      }
      manifest.emplace_back(name, rows, cols);
    } else {
      container.header.emplace_back(key, value);
    }
  }
  if (!ended) fail(FormatError::Kind::kTruncated, path, "header not terminated");

  for (const auto& [name, rows, cols] : manifest) {
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
        fail(FormatError::Kind::kTruncated, path, "payload truncated in block " + name);
      }
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
    container.blocks.emplace_back(name, Matrix(rows, cols, std::move(data)));
  }
  return container;
}

void append_model_spec(const ModelSpec& spec, Container& c) {
  c.header.emplace_back("arch", spec.architecture == Architecture::kMlp ? "mlp" : "tiny-conv");
  c.header.emplace_back("input_dim", std::to_string(spec.input_dim));
  c.header.emplace_back("classes", std::to_string(spec.classes));
  c.header.emplace_back("hidden", join_sizes(spec.hidden));
  c.header.emplace_back("activation", spec.activation == Activation::kRelu ? "relu" : "tanh");
  c.header.emplace_back("dropout", format_double(spec.dropout));
  c.header.emplace_back("seed", std::to_string(spec.seed));
  c.header.emplace_back("image", std::to_string(spec.image.height) + "x" +
                                     std::to_string(spec.image.width) + "x" +
                                     std::to_string(spec.image.channels));
}

ModelSpec read_model_spec(const Container& c) {
  ModelSpec spec;
  const std::string& arch = c.get("arch");
  if (arch == "mlp") {
    spec.architecture = Architecture::kMlp;
  } else if (arch == "tiny-conv") {
    spec.architecture = Architecture::kTinyConv;
  } else {
    throw Error("checkpoint: unknown architecture '" + arch + "'");
  }
  spec.input_dim = std::stoul(c.get("input_dim"));
  spec.classes = std::stoul(c.get("classes"));
  spec.hidden = split_sizes(c.get("hidden"));
  spec.activation = c.get("activation") == "tanh" ? Activation::kTanh : Activation::kRelu;
  spec.dropout = std::stod(c.get("dropout"));
  spec.seed = std::stoull(c.get("seed"));
  const std::string& image = c.get("image");
  if (std::sscanf(image.c_str(), "%zux%zux%zu", &spec.image.height, &spec.image.width,
                  &spec.image.channels) != 3) {
    throw Error("checkpoint: malformed image shape '" + image + "'");
  }
  return spec;
}

void save_model(const std::filesystem::path& path, const Model& model) {
  Container c;
  c.header.emplace_back("kind", "model");
  append_model_spec(model.spec(), c);
  for (std::size_t b = 0; b < model.params().size(); ++b) {
    c.blocks.emplace_back(model.block_names()[b], model.params()[b]);
  }
  write_container(path, c);
}

Model load_model(const std::filesystem::path& path) {
  const Container c = read_container(path);
  ModelSpec spec = read_model_spec(c);
  std::vector<Matrix> params;
  for (const std::string& name : block_names(spec)) params.push_back(c.block(name));
  return Model(std::move(spec), std::move(params));
}

}  // namespace bsdlab
