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

#include "bsdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "bsdlab/error.hpp"
#include "bsdlab/random.hpp"

namespace bsdlab {

namespace {

[[noreturn]] void fail(FormatError::Kind kind, const std::filesystem::path& path,
                       const std::string& what) {
  throw FormatError(kind, path.string() + ": " + what);
}

std::size_t infer_classes(std::span<const int> labels) {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return static_cast<std::size_t>(top + 1);
}

void check_labels(std::span<const int> labels, std::size_t classes,
                  const std::filesystem::path& path) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      fail(FormatError::Kind::kLabelOutOfRange, path,
           "label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
               " is outside [0," + std::to_string(classes) + ")");
    }
  }
}

// ---- IDX -------------------------------------------------------------------

struct IdxHeader {
  unsigned char type = 0;
  std::vector<std::uint32_t> dims;
};

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    fail(FormatError::Kind::kTruncated, path, "header truncated");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

IdxHeader read_idx_header(std::istream& in, const std::filesystem::path& path) {
  unsigned char magic[4];
  if (!in.read(reinterpret_cast<char*>(magic), 4)) {
    fail(FormatError::Kind::kTruncated, path, "file shorter than the IDX magic");
  }
  if (magic[0] != 0 || magic[1] != 0) {
    fail(FormatError::Kind::kBadMagic, path, "bad IDX magic");
  }
  IdxHeader h;
  h.type = magic[2];
  if (h.type != 0x08 && h.type != 0x0D && h.type != 0x0E) {
    fail(FormatError::Kind::kBadMagic, path,
         "unsupported IDX element type " + std::to_string(h.type));
  }
  const std::size_t rank = magic[3];
  if (rank == 0) fail(FormatError::Kind::kBadMagic, path, "IDX rank is zero");
  for (std::size_t r = 0; r < rank; ++r) h.dims.push_back(read_be32(in, path));
  return h;
}

std::vector<double> read_idx_values(std::istream& in, const IdxHeader& h,
                                    std::size_t count, const std::filesystem::path& path) {
  const std::size_t width = h.type == 0x08 ? 1 : h.type == 0x0D ? 4 : 8;
  std::vector<unsigned char> raw(count * width);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    fail(FormatError::Kind::kTruncated, path,
         "payload truncated: expected " + std::to_string(count) + " values");
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* p = raw.data() + i * width;
    if (width == 1) {
      values[i] = static_cast<double>(p[0]) / 255.0;
    } else if (width == 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits = (bits << 8) | p[b];
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    } else {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits = (bits << 8) | p[b];
      values[i] = std::bit_cast<double>(bits);
    }
  }
  return values;
}

// ---- CSV -------------------------------------------------------------------

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void Dataset::validate() const {
  if (classes < 2) throw Error("dataset: class count must be at least 2");
  if (labels.size() != samples.rows() || clean_labels.size() != samples.rows()) {
    throw Error("dataset: label count does not match sample count");
  }
  if (!image.empty() && image.size() != samples.cols()) {
    throw Error("dataset: image shape does not match feature count");
  }
  if (!all_finite(samples.data())) throw Error("dataset: non-finite sample values");
  for (std::span<const int> ls : {std::span<const int>(labels), std::span<const int>(clean_labels)}) {
    for (int l : ls) {
      if (l < 0 || static_cast<std::size_t>(l) >= classes) {
        throw Error("dataset: label " + std::to_string(l) + " outside [0," +
                    std::to_string(classes) + ")");
      }
    }
  }
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), source.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::span<const double> src = source.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Matrix blob_centers(const BlobSpec& spec) {
  if (!spec.centers.empty()) {
    if (spec.centers.rows() != spec.classes || spec.centers.cols() != spec.dim) {
      throw Error("blobs: explicit centers must be classes x dim");
    }
    return spec.centers;
  }
  Matrix centers(spec.classes, spec.dim);
  if (spec.dim == 1) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      centers(c, 0) = spec.spacing * static_cast<double>(c);
    }
    return centers;
  }
  const double k = static_cast<double>(spec.classes);
  const double radius = spec.spacing / (2.0 * std::sin(std::numbers::pi / k));
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / k;
    centers(c, 0) = radius * std::cos(angle);
    centers(c, 1) = radius * std::sin(angle);
  }
  return centers;
}

Dataset make_blobs(const BlobSpec& spec) {
  if (spec.classes < 2) throw Error("blobs: at least two classes required");
  if (spec.dim < 1) throw Error("blobs: dimension must be at least 1");
  if (!(spec.spread > 0.0) || !std::isfinite(spec.spread)) {
    throw Error("blobs: degenerate covariance (spread must be positive)");
  }
  const Matrix centers = blob_centers(spec);
  Dataset data;
  data.classes = spec.classes;
  data.samples = Matrix(spec.classes * spec.per_class, spec.dim);
  Rng rng(spec.seed);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t s = 0; s < spec.per_class; ++s, ++row) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        data.samples(row, j) = centers(c, j) + spec.spread * rng.normal();
      }
      data.labels.push_back(static_cast<int>(c));
    }
  }
  data.clean_labels = data.labels;
  return data;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t classes) {
  std::ifstream img(images, std::ios::binary);
  if (!img) fail(FormatError::Kind::kIo, images, "cannot open");
  const IdxHeader ih = read_idx_header(img, images);
  if (ih.dims.size() < 2) {
    fail(FormatError::Kind::kBadMagic, images, "image file needs rank >= 2");
  }
  const std::size_t n = ih.dims[0];
  std::size_t per_sample = 1;
  for (std::size_t r = 1; r < ih.dims.size(); ++r) per_sample *= ih.dims[r];

  std::ifstream lab(labels, std::ios::binary);
  if (!lab) fail(FormatError::Kind::kIo, labels, "cannot open");
  const IdxHeader lh = read_idx_header(lab, labels);
  if (lh.type != 0x08 || lh.dims.size() != 1) {
    fail(FormatError::Kind::kBadMagic, labels, "label file must be rank-1 unsigned bytes");
  }
  if (lh.dims[0] != n) {
    fail(FormatError::Kind::kRowMismatch, labels,
         std::to_string(lh.dims[0]) + " labels for " + std::to_string(n) + " images");
  }

  Dataset data;
  data.samples = Matrix(n, per_sample, read_idx_values(img, ih, n * per_sample, images));
  std::vector<double> raw = read_idx_values(lab, lh, n, labels);
  for (double v : raw) data.labels.push_back(static_cast<int>(std::lround(v * 255.0)));
  data.classes = classes == 0 ? infer_classes(data.labels) : classes;
  check_labels(data.labels, data.classes, labels);
  data.clean_labels = data.labels;
  if (ih.dims.size() == 3) {
    data.image = {ih.dims[1], ih.dims[2], 1};
  } else if (ih.dims.size() == 4) {
    data.image = {ih.dims[1], ih.dims[2], ih.dims[3]};
  }
  return data;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, bool as_bytes) {
  if (as_bytes) {
    for (double v : data.samples.data()) {
      const double scaled = v * 255.0;
      if (!(v >= 0.0 && v <= 1.0) || std::round(scaled) / 255.0 != v) {
        throw Error("write_idx: value " + format_double(v) +
                    " is not representable as an unsigned byte pixel");
      }
    }
  }
  std::ofstream img(images, std::ios::binary | std::ios::trunc);
  if (!img) fail(FormatError::Kind::kIo, images, "cannot open for writing");
  std::vector<std::uint32_t> dims = {static_cast<std::uint32_t>(data.size())};
  if (!data.image.empty()) {
    dims.push_back(static_cast<std::uint32_t>(data.image.height));
    dims.push_back(static_cast<std::uint32_t>(data.image.width));
    if (data.image.channels != 1) dims.push_back(static_cast<std::uint32_t>(data.image.channels));
  } else {
    dims.push_back(static_cast<std::uint32_t>(data.dim()));
  }
  const char type = as_bytes ? 0x08 : 0x0E;
  const char magic[4] = {0, 0, type, static_cast<char>(dims.size())};
  img.write(magic, 4);
  for (std::uint32_t d : dims) write_be32(img, d);
  for (double v : data.samples.data()) {
    if (as_bytes) {
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    } else {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 7; b >= 0; --b) img.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  if (!img) fail(FormatError::Kind::kIo, images, "write failed");

  std::ofstream lab(labels, std::ios::binary | std::ios::trunc);
  if (!lab) fail(FormatError::Kind::kIo, labels, "cannot open for writing");
  const char lmagic[4] = {0, 0, 0x08, 1};
  lab.write(lmagic, 4);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) {
    if (l > 255) throw Error("write_idx: label " + std::to_string(l) + " exceeds a byte");
    lab.put(static_cast<char>(l));
  }
  if (!lab) fail(FormatError::Kind::kIo, labels, "write failed");
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(FormatError::Kind::kIo, path, "cannot open");
  std::string line;
  if (!std::getline(in, line)) fail(FormatError::Kind::kTruncated, path, "empty file");
  const std::vector<std::string> header = split_csv(line);
  std::ptrdiff_t label_col = -1, clean_col = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == schema.label_column) {
      label_col = static_cast<std::ptrdiff_t>(c);
    } else if (!schema.clean_label_column.empty() && header[c] == schema.clean_label_column) {
      clean_col = static_cast<std::ptrdiff_t>(c);
    } else {
      feature_cols.push_back(c);
    }
  }
  if (label_col < 0) {
    fail(FormatError::Kind::kBadMagic, path,
         "missing label column '" + schema.label_column + "'");
  }

  Dataset data;
  std::vector<double> values;
  std::size_t line_no = 1;
  auto parse_int = [&](const std::string& cell) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      fail(FormatError::Kind::kBadValue, path,
           "line " + std::to_string(line_no) + ": bad label '" + cell + "'");
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) {
      fail(FormatError::Kind::kRowMismatch, path,
           "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
               " fields, header has " + std::to_string(header.size()));
    }
    for (std::size_t c : feature_cols) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument(cells[c]);
      } catch (const std::exception&) {
        fail(FormatError::Kind::kBadValue, path,
             "line " + std::to_string(line_no) + ": bad value '" + cells[c] + "'");
      }
    }
    data.labels.push_back(parse_int(cells[static_cast<std::size_t>(label_col)]));
    data.clean_labels.push_back(clean_col >= 0
                                    ? parse_int(cells[static_cast<std::size_t>(clean_col)])
                                    : data.labels.back());
  }
  const std::size_t n = data.labels.size();
  data.samples = Matrix(n, feature_cols.size(), std::move(values));
  data.classes = schema.classes;
  if (data.classes == 0) {
    data.classes = std::max(infer_classes(data.labels), infer_classes(data.clean_labels));
  }
  check_labels(data.labels, data.classes, path);
  check_labels(data.clean_labels, data.classes, path);
  return data;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const CsvSchema& schema) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(FormatError::Kind::kIo, path, "cannot open for writing");
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
  out << schema.label_column;
  if (!schema.clean_label_column.empty()) out << ',' << schema.clean_label_column;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.samples.row(i)) out << format_double(v) << ',';
    out << data.labels[i];
    if (!schema.clean_label_column.empty()) out << ',' << data.clean_labels[i];
    out << '\n';
  }
  if (!out) fail(FormatError::Kind::kIo, path, "write failed");
}

}  // namespace bsdlab
