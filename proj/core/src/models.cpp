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

#include "bsdlab/models.hpp"

#include <cmath>

#include "bsdlab/error.hpp"

namespace bsdlab {

namespace {

bool is_conv(const ModelSpec& spec) {
  return spec.architecture == Architecture::kTinyConv;
}

std::size_t pooled_height(const ModelSpec& spec) { return spec.image.height / 2; }
std::size_t pooled_width(const ModelSpec& spec) { return spec.image.width / 2; }

// Widths of the dense stack: head input, hidden layers, classes.
std::vector<std::size_t> dense_widths(const ModelSpec& spec) {
  std::vector<std::size_t> widths;
  widths.push_back(is_conv(spec)
                       ? kConvChannels * pooled_height(spec) * pooled_width(spec)
                       : spec.input_dim);
  widths.insert(widths.end(), spec.hidden.begin(), spec.hidden.end());
  widths.push_back(spec.classes);
  return widths;
}

double activate(Activation act, double z) {
  return act == Activation::kRelu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(Activation act, double z) {
  if (act == Activation::kRelu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

// out = in * w + bias (broadcast over rows).
void affine(const Matrix& in, const Matrix& w, const Matrix& bias, Matrix& out) {
  const std::size_t n = in.rows(), fan_in = w.rows(), fan_out = w.cols();
  out = Matrix(n, fan_out);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.row(i).data();
    for (std::size_t j = 0; j < fan_out; ++j) o[j] = bias(0, j);
    const double* x = in.row(i).data();
    for (std::size_t r = 0; r < fan_in; ++r) {
      const double xr = x[r];
      const double* wr = w.row(r).data();
      for (std::size_t j = 0; j < fan_out; ++j) o[j] += xr * wr[j];
    }
  }
}

void conv_forward(const ModelSpec& spec, const Matrix& kernel, const Matrix& bias,
                  const Matrix& input, Matrix& conv_pre, Matrix& pooled) {
  const std::size_t h = spec.image.height, w = spec.image.width,
                    ch = spec.image.channels;
  const std::size_t ph = pooled_height(spec), pw = pooled_width(spec);
  const std::size_t n = input.rows();
  conv_pre = Matrix(n, kConvChannels * h * w);
  pooled = Matrix(n, kConvChannels * ph * pw);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> img = input.row(i);
    std::span<double> out = conv_pre.row(i);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
      std::span<const double> k = kernel.row(o);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double acc = bias(0, o);
          for (std::size_t dy = 0; dy < 3; ++dy) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t base =
                  (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ch;
              for (std::size_t c = 0; c < ch; ++c) {
                acc += k[c * 9 + dy * 3 + dx] * img[base + c];
              }
            }
          }
          out[(o * h + y) * w + x] = acc;
        }
      }
    }
    std::span<double> pool = pooled.row(i);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
      for (std::size_t py = 0; py < ph; ++py) {
        for (std::size_t px = 0; px < pw; ++px) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const double z = out[(o * h + 2 * py + dy) * w + 2 * px + dx];
              acc += z > 0.0 ? z : 0.0;
            }
          }
          pool[(o * ph + py) * pw + px] = 0.25 * acc;
        }
      }
    }
  }
}

void conv_backward(const ModelSpec& spec, const ForwardCache& cache,
                   const Matrix& dpooled, Matrix& dkernel, Matrix& dbias) {
  const std::size_t h = spec.image.height, w = spec.image.width,
                    ch = spec.image.channels;
  const std::size_t ph = pooled_height(spec), pw = pooled_width(spec);
  for (std::size_t i = 0; i < cache.input.rows(); ++i) {
    std::span<const double> img = cache.input.row(i);
    std::span<const double> pre = cache.conv_pre.row(i);
    std::span<const double> dpool = dpooled.row(i);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
      std::span<double> dk = dkernel.row(o);
      for (std::size_t y = 0; y < 2 * ph; ++y) {
        for (std::size_t x = 0; x < 2 * pw; ++x) {
          if (pre[(o * h + y) * w + x] <= 0.0) continue;
          const double g = 0.25 * dpool[(o * ph + y / 2) * pw + x / 2];
          dbias(0, o) += g;
          for (std::size_t dy = 0; dy < 3; ++dy) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t dx = 0; dx < 3; ++dx) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - 1;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t base =
                  (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * ch;
              for (std::size_t c = 0; c < ch; ++c) {
                dk[c * 9 + dy * 3 + dx] += g * img[base + c];
              }
            }
          }
        }
      }
    }
  }
}

ForwardResult forward_impl(const Model& model, const Matrix& batch, Mode mode,
                           Rng* rng) {
  const ModelSpec& spec = model.spec();
  if (batch.cols() != spec.input_dim) {
    throw Error("forward: batch has " + std::to_string(batch.cols()) +
                " columns, model expects " + std::to_string(spec.input_dim));
  }
  const bool use_dropout = mode == Mode::kTrain && spec.dropout > 0.0;
  if (use_dropout && rng == nullptr) {
    throw Error("forward: train-mode dropout requires a random stream");
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.version = model.version();
  cache.mode = mode;
  cache.input = batch;

  std::span<const Matrix> params = model.params();
  std::size_t block = 0;
  Matrix act;
  if (is_conv(spec)) {
    conv_forward(spec, params[0], params[1], batch, cache.conv_pre, cache.pooled);
    act = cache.pooled;
    block = 2;
  } else {
    act = batch;
  }

  const std::size_t layers = spec.hidden.size() + 1;
  const double keep_scale = use_dropout ? 1.0 / (1.0 - spec.dropout) : 1.0;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z;
    affine(act, params[block + 2 * l], params[block + 2 * l + 1], z);
    cache.layer_inputs.push_back(std::move(act));
    if (l + 1 == layers) {
      result.logits = z;
      cache.pre_activations.push_back(std::move(z));
      break;
    }
    act = Matrix(z.rows(), z.cols());
    for (std::size_t j = 0; j < z.size(); ++j) {
      act.data()[j] = activate(spec.activation, z.data()[j]);
    }
    if (use_dropout) {
      Matrix mask(z.rows(), z.cols());
      for (std::size_t j = 0; j < mask.size(); ++j) {
        mask.data()[j] = rng->bernoulli(spec.dropout) ? 0.0 : keep_scale;
        act.data()[j] *= mask.data()[j];
      }
      cache.dropout_masks.push_back(std::move(mask));
    }
    cache.pre_activations.push_back(std::move(z));
  }

  result.probs = Matrix(result.logits.rows(), result.logits.cols());
  for (std::size_t i = 0; i < result.logits.rows(); ++i) {
    softmax_into(result.logits.row(i), result.probs.row(i));
  }
  return result;
}

}  // namespace

void ModelSpec::validate() const {
  if (classes < 2) throw Error("model: class count must be at least 2");
  if (input_dim < 1) throw Error("model: input dimension must be at least 1");
  for (std::size_t width : hidden) {
    if (width < 1) throw Error("model: hidden layer sizes must be at least 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw Error("model: dropout must be in [0, 1)");
  }
  if (architecture == Architecture::kTinyConv) {
    if (image.height < 2 || image.width < 2 || image.channels < 1) {
      throw Error("model: tiny-conv needs an image shape of at least 2x2x1");
    }
    if (image.size() != input_dim) {
      throw Error("model: image shape " + std::to_string(image.height) + "x" +
                  std::to_string(image.width) + "x" + std::to_string(image.channels) +
                  " does not match input dimension " + std::to_string(input_dim));
    }
  }
}

std::vector<std::pair<std::size_t, std::size_t>> block_shapes(const ModelSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  if (is_conv(spec)) {
    shapes.emplace_back(kConvChannels, spec.image.channels * 9);
    shapes.emplace_back(1, kConvChannels);
  }
  const std::vector<std::size_t> widths = dense_widths(spec);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    shapes.emplace_back(widths[l], widths[l + 1]);
    shapes.emplace_back(1, widths[l + 1]);
  }
  return shapes;
}

std::vector<std::string> block_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  if (is_conv(spec)) {
    names.emplace_back("conv.weight");
    names.emplace_back("conv.bias");
  }
  for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
    names.push_back("dense" + std::to_string(l) + ".weight");
    names.push_back("dense" + std::to_string(l) + ".bias");
  }
  return names;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  names_ = bsdlab::block_names(spec_);
  Rng rng(spec_.seed);
  for (const auto& [rows, cols] : block_shapes(spec_)) {
    Matrix block(rows, cols);
    const bool is_bias = params_.size() % 2 == 1;
    if (!is_bias) {
      // Conv kernels are stored (out, in*9): fan-in is the row width.
      const bool conv_kernel = is_conv(spec_) && params_.empty();
      const double fan_in = static_cast<double>(conv_kernel ? cols : rows);
      const double fan_out = static_cast<double>(conv_kernel ? rows * 9 : cols);
      const double limit = spec_.activation == Activation::kRelu
                               ? std::sqrt(6.0 / fan_in)
                               : std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : block.data()) v = rng.uniform(-limit, limit);
    }
    params_.push_back(std::move(block));
  }
}

Model::Model(ModelSpec spec, std::vector<Matrix> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  names_ = bsdlab::block_names(spec_);
  check_shapes();
}

void Model::check_shapes() const {
  const auto shapes = block_shapes(spec_);
  if (shapes.size() != params_.size()) {
    throw Error("model: expected " + std::to_string(shapes.size()) +
                " parameter blocks, got " + std::to_string(params_.size()));
  }
  for (std::size_t b = 0; b < shapes.size(); ++b) {
    if (params_[b].rows() != shapes[b].first || params_[b].cols() != shapes[b].second) {
      throw Error("model: block " + names_[b] + " has shape " +
                  shape_string(params_[b]) + ", expected " +
                  std::to_string(shapes[b].first) + "x" +
                  std::to_string(shapes[b].second));
    }
  }
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t count = 0;
  for (const Matrix& m : params_) count += m.size();
  return count;
}

std::vector<double> Model::flat_params() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Matrix& m : params_) flat.insert(flat.end(), m.data().begin(), m.data().end());
  return flat;
}

void Model::set_flat_params(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw Error("model: flat parameter vector has the wrong length");
  }
  ++version_;
  std::size_t offset = 0;
  for (Matrix& m : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), m.size(),
                m.data().begin());
    offset += m.size();
  }
}

Model init_model(const ModelSpec& spec) { return Model(spec); }

ForwardResult forward(const Model& model, const Matrix& batch, Rng* rng) {
  return forward_impl(model, batch, model.mode(), rng);
}

Matrix predict(const Model& model, const Matrix& batch) {
  return forward_impl(model, batch, Mode::kEval, nullptr).probs;
}

std::vector<Matrix> backward(const Model& model, const ForwardCache& cache,
                             const Matrix& dlogits) {
  if (cache.version != model.version() || cache.layer_inputs.empty()) {
    throw Error("backward: stale cache (parameters changed since forward)");
  }
  const ModelSpec& spec = model.spec();
  const std::size_t layers = spec.hidden.size() + 1;
  const std::size_t offset = is_conv(spec) ? 2 : 0;
  if (dlogits.rows() != cache.input.rows() || dlogits.cols() != spec.classes) {
    throw Error("backward: gradient shape " + shape_string(dlogits) +
                " does not match logits");
  }

  std::span<const Matrix> params = model.params();
  std::vector<Matrix> grads;
  for (const Matrix& p : params) grads.emplace_back(p.rows(), p.cols());

  Matrix delta = dlogits;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& in = cache.layer_inputs[l];
    const Matrix& w = params[offset + 2 * l];
    Matrix& dw = grads[offset + 2 * l];
    Matrix& db = grads[offset + 2 * l + 1];
    const std::size_t fan_in = w.rows(), fan_out = w.cols();
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      const double* d = delta.row(i).data();
      const double* x = in.row(i).data();
      for (std::size_t j = 0; j < fan_out; ++j) db(0, j) += d[j];
      for (std::size_t r = 0; r < fan_in; ++r) {
        const double xr = x[r];
        double* dwr = dw.row(r).data();
        for (std::size_t j = 0; j < fan_out; ++j) dwr[j] += xr * d[j];
      }
    }
    if (l == 0 && !is_conv(spec)) break;

    Matrix din(delta.rows(), fan_in);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
      const double* d = delta.row(i).data();
      double* o = din.row(i).data();
      for (std::size_t r = 0; r < fan_in; ++r) {
        const double* wr = w.row(r).data();
        double acc = 0.0;
        for (std::size_t j = 0; j < fan_out; ++j) acc += wr[j] * d[j];
        o[r] = acc;
      }
    }
    if (l == 0) {
      conv_backward(spec, cache, din, grads[0], grads[1]);
      break;
    }
    const Matrix& pre = cache.pre_activations[l - 1];
    const bool masked = !cache.dropout_masks.empty();
    for (std::size_t j = 0; j < din.size(); ++j) {
      double g = din.data()[j];
      if (masked) g *= cache.dropout_masks[l - 1].data()[j];
      din.data()[j] = g * activate_grad(spec.activation, pre.data()[j]);
    }
    delta = std::move(din);
  }
  return grads;
}

std::vector<Matrix> backward_from_probs(const Model& model, const ForwardCache& cache,
                                        const Matrix& probs, const Matrix& dprobs) {
  if (!probs.same_shape(dprobs)) {
    throw Error("backward_from_probs: probability and gradient shapes differ");
  }
  Matrix dlogits(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::span<const double> p = probs.row(i);
    std::span<const double> g = dprobs.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
    for (std::size_t j = 0; j < p.size(); ++j) dlogits(i, j) = p[j] * (g[j] - dot);
  }
  return backward(model, cache, dlogits);
}

Matrix cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets,
                                double scale) {
  if (!probs.same_shape(targets)) {
    throw Error("cross-entropy gradient: prediction " + shape_string(probs) +
                " and target " + shape_string(targets) + " shapes differ");
  }
  Matrix grad(probs.rows(), probs.cols());
  for (std::size_t j = 0; j < probs.size(); ++j) {
    grad.data()[j] = scale * (probs.data()[j] - targets.data()[j]);
  }
  return grad;
}

void accumulate(std::vector<Matrix>& into, const std::vector<Matrix>& grads) {
  if (into.empty()) {
    into = grads;
    return;
  }
  if (into.size() != grads.size()) throw Error("accumulate: block count mismatch");
  for (std::size_t b = 0; b < into.size(); ++b) {
    if (!into[b].same_shape(grads[b])) throw Error("accumulate: shape mismatch");
    for (std::size_t j = 0; j < into[b].size(); ++j) {
      into[b].data()[j] += grads[b].data()[j];
    }
  }
}

}  // namespace bsdlab
