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

#include <cmath>
#include <numeric>

#include "bsdlab/data.hpp"
#include "bsdlab/error.hpp"
#include "bsdlab/random.hpp"

namespace bsdlab {

namespace {

// First `count` entries of a seeded Fisher-Yates shuffle of `pool`.
std::vector<std::size_t> choose(std::vector<std::size_t> pool, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::size_t rounded_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

}  // namespace

std::vector<int> inject_symmetric(std::span<const int> labels, double rate, std::size_t k,
                                  std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("noise rate must be in [0,1]");
  if (k < 2) throw Error("symmetric noise needs at least two classes");
  std::vector<int> noisy(labels.begin(), labels.end());
  std::vector<std::size_t> pool(labels.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i : choose(std::move(pool), rounded_count(rate, labels.size()), rng)) {
    // Uniform over the k - 1 other classes.
    const int shift = 1 + static_cast<int>(rng.below(k - 1));
    noisy[i] = (labels[i] + shift) % static_cast<int>(k);
  }
  return noisy;
}

std::vector<int> cyclic_map(std::size_t k) {
  std::vector<int> map(k);
  for (std::size_t c = 0; c < k; ++c) map[c] = static_cast<int>((c + 1) % k);
  return map;
}

std::vector<int> inject_asymmetric(std::span<const int> labels, double rate,
                                   std::span<const int> map, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("noise rate must be in [0,1]");
  for (std::size_t c = 0; c < map.size(); ++c) {
    if (map[c] == static_cast<int>(c)) {
      throw Error("asymmetric noise map has a fixed point on class " + std::to_string(c));
    }
    if (map[c] < -1 || map[c] >= static_cast<int>(map.size())) {
      throw Error("asymmetric noise map sends class " + std::to_string(c) +
                  " outside the label space");
    }
  }
  std::vector<int> noisy(labels.begin(), labels.end());
  Rng rng(seed);
  for (std::size_t c = 0; c < map.size(); ++c) {
    if (map[c] < 0) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(c)) members.push_back(i);
    }
    const std::size_t count = rounded_count(rate, members.size());
    for (std::size_t i : choose(std::move(members), count, rng)) noisy[i] = map[c];
  }
  return noisy;
}

Dataset apply_noise(const Dataset& data, const NoiseSpec& spec) {
  Dataset out = data;
  switch (spec.kind) {
    case NoiseKind::kNone:
      break;
    case NoiseKind::kSymmetric:
      out.labels = inject_symmetric(data.clean_labels, spec.rate, data.classes, spec.seed);
      break;
    case NoiseKind::kAsymmetric: {
      const std::vector<int> map = spec.map.empty() ? cyclic_map(data.classes) : spec.map;
      if (map.size() != data.classes) {
        throw Error("asymmetric noise map must have one entry per class");
      }
      out.labels = inject_asymmetric(data.clean_labels, spec.rate, map, spec.seed);
      break;
    }
  }
  return out;
}

}  // namespace bsdlab
