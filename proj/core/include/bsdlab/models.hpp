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

#ifndef BSDLAB_MODELS_HPP_
#define BSDLAB_MODELS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsdlab/numerics.hpp"
#include "bsdlab/random.hpp"

namespace bsdlab {

enum class Activation { kRelu, kTanh };
enum class Architecture { kMlp, kTinyConv };
enum class Mode { kTrain, kEval };

// Height x width x channels of an image-grid sample, stored row-major (h, w, c)
// inside a flat feature row. All zero for plain vector data.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const noexcept { return height * width * channels; }
  bool empty() const noexcept { return size() == 0; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct ModelSpec {
  std::size_t input_dim = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> hidden;
  Activation activation = Activation::kRelu;
  Architecture architecture = Architecture::kMlp;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  ImageShape image;  // required for tiny-conv

  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Tiny-conv layout: 3x3 same-padded convolution with this many output maps,
// relu, 2x2 average pooling, then the MLP head described by `hidden`.
inline constexpr std::size_t kConvChannels = 8;

class Model {
 public:
  // He-uniform (relu) or Xavier-uniform (tanh) weights, zero biases.
  explicit Model(ModelSpec spec);
  Model(ModelSpec spec, std::vector<Matrix> params);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::span<const Matrix> params() const noexcept { return params_; }
  // Any mutable access invalidates outstanding forward caches.
  std::span<Matrix> mutable_params() noexcept {
    ++version_;
    return params_;
  }
  const std::vector<std::string>& block_names() const noexcept { return names_; }
  std::size_t parameter_count() const noexcept;

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode mode) noexcept { mode_ = mode; }

  std::uint64_t version() const noexcept { return version_; }

  // Flattened copy of all parameters, and its inverse; used by gradient checks.
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);

 private:
  void check_shapes() const;

  ModelSpec spec_;
  std::vector<Matrix> params_;
  std::vector<std::string> names_;
  Mode mode_ = Mode::kTrain;
  std::uint64_t version_ = 0;
};

Model init_model(const ModelSpec& spec);

// Shapes of every parameter block, in storage order.
std::vector<std::pair<std::size_t, std::size_t>> block_shapes(const ModelSpec& spec);
std::vector<std::string> block_names(const ModelSpec& spec);

struct ForwardCache {
  std::uint64_t version = 0;
  Mode mode = Mode::kEval;
  Matrix input;
  // Tiny-conv only: conv pre-activations and pooled features.
  Matrix conv_pre;
  Matrix pooled;
  // Per MLP layer: input activations (after dropout) and pre-activations.
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> dropout_masks;  // empty when dropout is inactive
};

struct ForwardResult {
  Matrix logits;
  Matrix probs;
  ForwardCache cache;
};

// Runs the model in its current mode. rng drives dropout masks and may be null
// when no dropout is applied (eval mode or rate 0).
ForwardResult forward(const Model& model, const Matrix& batch, Rng* rng);

// Eval-mode probabilities regardless of the model's mode.
Matrix predict(const Model& model, const Matrix& batch);

// Gradients of a scalar loss given dLoss/dLogits. Throws on a stale cache.
std::vector<Matrix> backward(const Model& model, const ForwardCache& cache,
                             const Matrix& dlogits);

// Same, starting from dLoss/dProbs (chained through the softmax Jacobian).
std::vector<Matrix> backward_from_probs(const Model& model, const ForwardCache& cache,
                                        const Matrix& probs, const Matrix& dprobs);

// dLogits for scale * sum_i CE(targets_i, softmax(z_i)): scale * (p - t).
Matrix cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets, double scale);

void accumulate(std::vector<Matrix>& into, const std::vector<Matrix>& grads);

}  // namespace bsdlab

#endif  // BSDLAB_MODELS_HPP_
