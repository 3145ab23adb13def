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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bsdlab/analysis.hpp"
#include "bsdlab/data.hpp"
#include "bsdlab/models.hpp"
#include "bsdlab/numerics.hpp"
#include "bsdlab/targets.hpp"
#include "bsdlab/training.hpp"
#include "oracles.hpp"

namespace bsdlab {
namespace {

using Vec = std::vector<double>;

Vec random_logits(std::mt19937_64& rng, std::size_t k, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Vec z(k);
  for (double& v : z) v = n(rng);
  return z;
}

TEST(Property, SoftmaxOnSimplexAndShiftInvariant) {
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t k = 2 + rng() % 9;
    const double scale = trial % 3 == 0 ? 300.0 : 3.0;
    const Vec z = random_logits(rng, k, scale);
    const Vec p = softmax(z);
    double s = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
    Vec shifted = z;
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (double& v : shifted) v += c;
    const Vec q = softmax(shifted);
    for (std::size_t j = 0; j < k; ++j) ASSERT_NEAR(p[j], q[j], 1e-12);
  }
}

TEST(Property, KlNonNegativeAndCrossEntropyDecomposes) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    const Vec p = oracle::random_simplex(rng, k, true);
    const Vec q = oracle::random_simplex(rng, k);
    EXPECT_GE(kl_div(p, q), 0.0);
    EXPECT_NEAR(kl_div(p, p), 0.0, 1e-15);
    EXPECT_NEAR(soft_cross_entropy(p, q) - kl_div(p, q), entropy(p), 1e-9);
  }
}

TEST(Property, OptimizerStepDeterministic) {
  std::mt19937_64 rng(102);
  for (OptimizerKind kind : {OptimizerKind::kSgdMomentum, OptimizerKind::kAdam}) {
    std::vector<Matrix> params(2, Matrix(3, 4)), grads(2, Matrix(3, 4));
    for (auto* set : {&params, &grads}) {
      for (Matrix& m : *set) {
        for (double& v : m.data()) v = random_logits(rng, 1, 1.0)[0];
      }
    }
    auto a = params, b = params;
    OptimizerState sa, sb;
    sa.config.kind = sb.config.kind = kind;
    sa.config.weight_decay = sb.config.weight_decay = 1e-3;
    for (int s = 0; s < 10; ++s) {
      optimizer_step(a, grads, sa);
      optimizer_step(b, grads, sb);
    }
    EXPECT_EQ(a, b);
    EXPECT_EQ(sa.first_moment, sb.first_moment);
  }
}

TEST(Property, ForwardRowsOnSimplexForArbitraryInputs) {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 40; ++trial) {
    ModelSpec spec;
    spec.input_dim = 1 + rng() % 6;
    spec.classes = 2 + rng() % 5;
    spec.hidden.assign(rng() % 3, 1 + rng() % 10);
    spec.activation = trial % 2 ? Activation::kTanh : Activation::kRelu;
    spec.seed = rng();
    const Model m = init_model(spec);
    Matrix x(16, spec.input_dim);
    const double scale = std::pow(10.0, static_cast<double>(rng() % 7) - 2);
    for (double& v : x.data()) v = random_logits(rng, 1, scale)[0];
    const Matrix p = predict(m, x);
    for (std::size_t i = 0; i < p.rows(); ++i) ASSERT_TRUE(on_simplex(p.row(i), 1e-12));
    EXPECT_EQ(predict(m, x), p);
  }
}

TEST(Property, SimplexConservationOverManyUpdates) {
  std::mt19937_64 rng(104);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<int> labels = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  for (double gamma : {0.0, 0.5, 0.95, 1.0}) {
    auto store = EvidenceStore::init_prior(labels, 5, 1000.0, 0.0, gamma);
    for (int t = 0; t < 25000; ++t) {
      const std::size_t i = rng() % labels.size();
      store.update(i, oracle::random_simplex(rng, 5, true));
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
      EXPECT_TRUE(on_simplex(store.target(i), 1e-9));
      for (double v : store.target(i)) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(Property, ConjugacyEquivalenceRandomTriples) {
  std::mt19937_64 rng(105);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::exponential_distribution<double> ex(0.01);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    Vec alpha(k);
    for (double& a : alpha) a = u(rng) < 0.3 ? 0.0 : ex(rng);
    alpha[rng() % k] += 1.0;
    const double gamma = trial % 10 == 0 ? 1.0 : u(rng);
    const Vec p = oracle::random_simplex(rng, k, true);
    EvidenceStore s(Matrix(1, k, oracle::normalize(alpha)), {oracle::sum(alpha)}, gamma);
    s.update(0, p);
    const Vec want = oracle::normalize(oracle::conjugate_update(alpha, p, gamma));
    for (std::size_t j = 0; j < k; ++j) ASSERT_NEAR(s.target(0)[j], want[j], 1e-12);
  }
}

TEST(Property, GammaZeroReturnsPredictionBitExactly) {
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    EvidenceStore s(Matrix(1, k, oracle::random_simplex(rng, k)), {1.0 + rng() % 1000}, 0.0);
    const Vec p = softmax(random_logits(rng, k, 2.0));
    s.update(0, p);
    for (std::size_t j = 0; j < k; ++j) ASSERT_EQ(s.target(0)[j], p[j]);
  }
}

TEST(Property, SharpenPreservesArgmaxAndOneIsIdentity) {
  std::mt19937_64 rng(107);
  std::uniform_real_distribution<double> tau(0.05, 5.0);
  for (int trial = 0; trial < 5000; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    const Vec p = oracle::random_simplex(rng, k);
    const Vec s = sharpen(p, tau(rng));
    EXPECT_EQ(argmax(s), argmax(p));
    const Vec same = sharpen(p, 1.0);
    for (std::size_t j = 0; j < k; ++j) ASSERT_NEAR(same[j], p[j], 1e-15);
  }
}

TEST(Property, CalibrationMetricsInUnitInterval) {
  std::mt19937_64 rng(108);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng() % 6, n = 1 + rng() % 60;
    Matrix p(n, k);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec r = oracle::random_simplex(rng, k, true);
      std::copy(r.begin(), r.end(), p.row(i).begin());
      labels[i] = static_cast<int>(rng() % k);
    }
    const std::size_t bins = 1 + rng() % 20;
    for (double v : {ece(p, labels, bins), sce(p, labels, bins), ace(p, labels, bins)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Property, AurocInvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(109);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec id(1 + rng() % 30), ood(1 + rng() % 30);
    for (double& v : id) v = std::round(u(rng) * 10) / 10;
    for (double& v : ood) v = std::round(u(rng) * 10) / 10;
    const double a = auroc(id, ood);
    EXPECT_NEAR(a, oracle::auroc(id, ood), 1e-12);
    Vec ti = id, to = ood;
    for (double& v : ti) v = std::log(v + 0.5) * 4.0 + 1.0;
    for (double& v : to) v = std::log(v + 0.5) * 4.0 + 1.0;
    EXPECT_NEAR(auroc(ti, to), a, 1e-12);
  }
}

TEST(Property, FlipProbabilityDependsOnlyOnArgmax) {
  std::mt19937_64 rng(110);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 3, frames = 2 + rng() % 6, n = 1 + rng() % 10;
    std::vector<std::vector<std::size_t>> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < frames; ++f) {
        // Two differently-valued probability rows with the same top class.
        const std::size_t top = rng() % k;
        Vec p = oracle::random_simplex(rng, k), q = oracle::random_simplex(rng, k);
        p[top] += 2.0;
        q[top] += 5.0;
        a[i].push_back(argmax(p));
        b[i].push_back(argmax(q));
      }
    }
    EXPECT_EQ(mean_flip_probability(a), mean_flip_probability(b));
    EXPECT_NEAR(mean_flip_probability(a), oracle::flips(a), 1e-15);
  }
}

TEST(Property, DarkKnowledgeIdentities) {
  std::mt19937_64 rng(111);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng() % 6, n = k * (1 + rng() % 20);
    Matrix p(n, k);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec r = softmax(random_logits(rng, k, 3.0));
      std::copy(r.begin(), r.end(), p.row(i).begin());
      labels[i] = static_cast<int>(i % k);
    }
    const Matrix mu = mu_matrix(p, labels, k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) ASSERT_EQ(mu(i, j), mu(j, i));
    }
    EXPECT_EQ(delta_decomposition(p, labels, mu).reconstruct(labels), p);
  }
}

TEST(Property, NoiseCardinalityAndCleanLabelsUntouched) {
  std::mt19937_64 rng(112);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    BlobSpec b;
    b.classes = 2 + rng() % 5;
    b.per_class = 1 + rng() % 40;
    b.seed = rng();
    const Dataset d = make_blobs(b);
    const double rate = u(rng);
    const NoiseKind kind = trial % 2 ? NoiseKind::kSymmetric : NoiseKind::kAsymmetric;
    const Dataset noisy = apply_noise(d, NoiseSpec{kind, rate, rng(), {}});
    EXPECT_EQ(noisy.clean_labels, d.clean_labels);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < d.size(); ++i) changed += noisy.labels[i] != d.labels[i];
    const std::size_t want =
        kind == NoiseKind::kSymmetric
            ? static_cast<std::size_t>(std::llround(rate * static_cast<double>(d.size())))
            : b.classes * static_cast<std::size_t>(
                              std::llround(rate * static_cast<double>(b.per_class)));
    EXPECT_EQ(changed, want);
  }
}

TEST(Property, AugmentationsPreserveShape) {
  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 100; ++trial) {
    const ImageShape img{2 + rng() % 8, 2 + rng() % 8, 1 + rng() % 3};
    Vec x(img.size());
    for (double& v : x) v = random_logits(rng, 1, 1.0)[0];
    AugmentSpec spec;
    spec.pad = rng() % 5;
    spec.erase_fraction = std::uniform_real_distribution<double>(0, 1)(rng);
    EXPECT_EQ(augment_weak(x, img, spec, rng()).size(), x.size());
    EXPECT_EQ(augment_strong(x, img, spec, rng()).size(), x.size());
  }
}

// Stored targets stay on the simplex at every epoch boundary for every mode.
TEST(Property, TrainingKeepsStoreOnSimplex) {
  BlobSpec b;
  b.classes = 3;
  b.per_class = 30;
  b.seed = 3;
  const Dataset d = make_blobs(b);
  ModelSpec spec;
  spec.input_dim = 2;
  spec.classes = 3;
  spec.hidden = {8};
  spec.seed = 4;
  for (StrategyMode mode : {StrategyMode::kBsd, StrategyMode::kPsKd, StrategyMode::kDlb,
                            StrategyMode::kTe, StrategyMode::kBaseline}) {
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 16;
    cfg.strategy.mode = mode;
    cfg.strategy.granularity = StrategyConfig::default_granularity(mode);
    cfg.strategy.tau = 0.7;
    cfg.bsd_plus.enabled = mode == StrategyMode::kBsd;
    Trainer t(spec, cfg, d, 5);
    for (int e = 0; e < 8; ++e) {
      t.train_epoch();
      for (std::size_t i = 0; i < d.size(); ++i) {
        ASSERT_TRUE(on_simplex(t.strategy().store().target(i), 1e-9));
        for (std::size_t ep : {1u, 8u}) ASSERT_TRUE(on_simplex(t.strategy().target(i, ep), 1e-9));
      }
    }
  }
}

}  // namespace
}  // namespace bsdlab
