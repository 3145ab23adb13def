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
#include <cmath>

#include "bsdlab/data.hpp"
#include "bsdlab/random.hpp"

namespace bsdlab {

namespace {

void jitter(std::span<double> values, double sigma, Rng& rng) {
  if (sigma == 0.0) return;
  for (double& v : values) v += sigma * rng.normal();
}

// Zero-padded random crop back to the original size plus a coin-flip mirror.
std::vector<double> crop_and_flip(std::span<const double> sample, const ImageShape& image,
                                  std::size_t pad, Rng& rng) {
  const std::size_t h = image.height, w = image.width, ch = image.channels;
  const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) -
                            static_cast<std::ptrdiff_t>(pad);
  const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(rng.below(2 * pad + 1)) -
                            static_cast<std::ptrdiff_t>(pad);
  const bool flip = rng.bernoulli(0.5);
  std::vector<double> out(sample.size(), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t fx = flip ? w - 1 - x : x;
      const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(fx) + dx;
      if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        out[(y * w + x) * ch + c] =
            sample[(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ch + c];
      }
    }
  }
  return out;
}

}  // namespace

void erase_square(std::span<double> sample, const ImageShape& image, std::size_t top,
                  std::size_t left, std::size_t side, double fill) {
  const std::size_t y_end = std::min(image.height, top + side);
  const std::size_t x_end = std::min(image.width, left + side);
  for (std::size_t y = top; y < y_end; ++y) {
    for (std::size_t x = left; x < x_end; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        sample[(y * image.width + x) * image.channels + c] = fill;
      }
    }
  }
}

std::vector<double> augment_weak(std::span<const double> sample, const ImageShape& image,
                                 const AugmentSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  if (image.empty()) {
    std::vector<double> out(sample.begin(), sample.end());
    jitter(out, spec.jitter, rng);
    return out;
  }
  return crop_and_flip(sample, image, spec.pad, rng);
}

std::vector<double> augment_strong(std::span<const double> sample, const ImageShape& image,
                                   const AugmentSpec& spec, std::uint64_t seed) {
  std::vector<double> out = augment_weak(sample, image, spec, seed);
  Rng rng(derive_seed({seed, 0x57A0}));
  if (!image.empty()) {
    const std::size_t edge = std::min(image.height, image.width);
    const std::size_t side = static_cast<std::size_t>(
        std::lround(spec.erase_fraction * static_cast<double>(edge)));
    if (side > 0) {
      const std::size_t top = rng.below(image.height - std::min(side, image.height) + 1);
      const std::size_t left = rng.below(image.width - std::min(side, image.width) + 1);
      erase_square(out, image, top, left, side, spec.fill);
    }
  }
  jitter(out, spec.jitter * spec.strong_jitter, rng);
  return out;
}

}  // namespace bsdlab
