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

#ifndef BSDLAB_DATA_HPP_
#define BSDLAB_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bsdlab/models.hpp"
#include "bsdlab/numerics.hpp"

namespace bsdlab {

// Labeled samples. Rows of `samples` are feature vectors (d columns) or image
// grids flattened (h, w, c). clean_labels never change after construction;
// noise protocols produce new active labels.
struct Dataset {
  Matrix samples;
  std::vector<int> clean_labels;
  std::vector<int> labels;
  std::size_t classes = 0;
  ImageShape image;
  std::string split;

  std::size_t size() const noexcept { return samples.rows(); }
  std::size_t dim() const noexcept { return samples.cols(); }
  void validate() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Selects rows (in the given order) into a new matrix.
Matrix gather_rows(const Matrix& source, std::span<const std::size_t> rows);

struct BlobSpec {
  std::size_t classes = 4;
  std::size_t per_class = 250;
  std::size_t dim = 2;
  double spacing = 3.0;  // distance between neighbouring centers
  double spread = 1.0;   // isotropic standard deviation
  std::uint64_t seed = 0;
  // Explicit centers (classes x dim). When empty, centers sit on a circle in
  // the first two coordinates with neighbouring centers `spacing` apart.
  Matrix centers;
};

Matrix blob_centers(const BlobSpec& spec);

// Gaussian clusters, class-major order. Pure function of the spec.
Dataset make_blobs(const BlobSpec& spec);

// IDX (big-endian) images and labels. Image files may hold unsigned bytes
// (0x08, scaled to [0, 1]), float32 (0x0D) or float64 (0x0E) entries.
// classes = 0 infers the class count from the labels.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t classes = 0);
// Writes float64 images (unsigned bytes when every value is a multiple of
// 1/255 in [0, 1] and as_bytes is set) and unsigned-byte labels.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels, bool as_bytes = false);

struct CsvSchema {
  std::string label_column = "label";
  // Optional column with the pre-noise label; written on export.
  std::string clean_label_column = "clean_label";
  std::size_t classes = 0;  // 0 = infer
};

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const CsvSchema& schema = {});

enum class NoiseKind { kNone, kSymmetric, kAsymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double rate = 0.0;
  std::uint64_t seed = 0;
  // Asymmetric target class per source class; -1 leaves a class alone.
  // Empty means the cyclic successor map c -> c + 1 mod k.
  std::vector<int> map;
};

// Exactly round(rate * n) indices, chosen without replacement, each moved to
// a uniformly chosen different class.
std::vector<int> inject_symmetric(std::span<const int> labels, double rate, std::size_t k,
                                  std::uint64_t seed);
// For every mapped class, round(rate * class_count) of its samples move to
// map[class].
std::vector<int> inject_asymmetric(std::span<const int> labels, double rate,
                                   std::span<const int> map, std::uint64_t seed);
std::vector<int> cyclic_map(std::size_t k);

// Returns a copy of data with active labels replaced per spec.
Dataset apply_noise(const Dataset& data, const NoiseSpec& spec);

struct AugmentSpec {
  double jitter = 0.05;          // weak Gaussian jitter sigma
  double strong_jitter = 3.0;    // multiplier on jitter for strong views
  std::size_t pad = 4;           // crop padding for grids
  double erase_fraction = 0.5;   // max side of the erased square / min(h, w)
  double fill = 0.0;             // erased pixel value
};

// Weak view: pad-and-crop plus horizontal flip for grids, jitter for vectors.
std::vector<double> augment_weak(std::span<const double> sample, const ImageShape& image,
                                 const AugmentSpec& spec, std::uint64_t seed);
// Strong view: weak view, random square erasure (grids) and amplified jitter.
std::vector<double> augment_strong(std::span<const double> sample, const ImageShape& image,
                                   const AugmentSpec& spec, std::uint64_t seed);

// Square erasure of side `side` with top-left corner (top, left), clipped.
void erase_square(std::span<double> sample, const ImageShape& image, std::size_t top,
                  std::size_t left, std::size_t side, double fill);

}  // namespace bsdlab

#endif  // BSDLAB_DATA_HPP_
