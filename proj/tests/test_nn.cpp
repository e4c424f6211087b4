// Copyright 2026 The damp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "damp/data.hpp"
#include "damp/error.hpp"
#include "damp/metrics.hpp"
#include "damp/model.hpp"
#include "damp/train.hpp"
#include "helpers.hpp"

using namespace damp;
using linalg::Matrix;
using linalg::Vector;

namespace {

// Plain nested-loop evaluation of a model, written against the layer
// definitions rather than the library's matrix layout.
using Tensor = std::vector<std::vector<std::vector<double>>>;  // [c][y][x]

Tensor conv_direct(const Tensor& in, const nn::Stage& s) {
  const int c_in = static_cast<int>(in.size());
  const int h = static_cast<int>(in[0].size());
  const int w = static_cast<int>(in[0][0].size());
  Tensor out(static_cast<std::size_t>(s.out_channels),
             std::vector<std::vector<double>>(h, std::vector<double>(w, 0.0)));
  for (int o = 0; o < s.out_channels; ++o) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = s.bias(o);
        for (int c = 0; c < c_in; ++c) {
          for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = y + ky - 1;
              const int ix = x + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += s.weight(o, (c * 3 + ky) * 3 + kx) * in[c][iy][ix];
            }
          }
        }
        out[o][y][x] = acc;
      }
    }
  }
  return out;
}

std::vector<double> direct_logits(const nn::StageModel& m, const data::LabeledDataset& d,
                                  std::size_t i) {
  const auto x = d.sample(i);
  std::vector<double> pooled;
  if (m.arch.kind == nn::ArchKind::Mlp5) {
    std::vector<double> v(x.begin(), x.end());
    for (const auto& s : m.stages) {
      std::vector<double> next(static_cast<std::size_t>(s.out_channels));
      for (int o = 0; o < s.out_channels; ++o) {
        double acc = s.bias(o);
        for (std::size_t k = 0; k < v.size(); ++k) acc += s.weight(o, static_cast<Eigen::Index>(k)) * v[k];
        next[o] = std::max(0.0, acc);
      }
      v = next;
    }
    pooled = v;
  } else {
    const auto& shape = m.input;
    Tensor t(shape.channels, std::vector<std::vector<double>>(
                                 shape.height, std::vector<double>(shape.width)));
    for (int c = 0; c < shape.channels; ++c)
      for (int y = 0; y < shape.height; ++y)
        for (int xx = 0; xx < shape.width; ++xx)
          t[c][y][xx] = x[(c * shape.height + y) * shape.width + xx];
    for (const auto& s : m.stages) {
      Tensor a = conv_direct(t, s);
      for (int o = 0; o < s.out_channels; ++o) {
        const double inv = 1.0 / std::sqrt(s.running_var(o) + nn::kNormEps);
        for (auto& row : a[o])
          for (auto& v : row)
            v = std::max(0.0, (v - s.running_mean(o)) * inv * s.norm_scale(o) + s.norm_shift(o));
      }
      if (s.pool) {
        Tensor p(a.size(), std::vector<std::vector<double>>(a[0].size() / 2,
                                                            std::vector<double>(a[0][0].size() / 2)));
        for (std::size_t o = 0; o < a.size(); ++o)
          for (std::size_t y = 0; y < p[o].size(); ++y)
            for (std::size_t xx = 0; xx < p[o][y].size(); ++xx)
              p[o][y][xx] = std::max({a[o][2 * y][2 * xx], a[o][2 * y][2 * xx + 1],
                                      a[o][2 * y + 1][2 * xx], a[o][2 * y + 1][2 * xx + 1]});
        a = p;
      }
      t = a;
    }
    for (const auto& plane : t) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& row : plane)
        for (double v : row) {
          sum += v;
          ++n;
        }
      pooled.push_back(sum / static_cast<double>(n));
    }
  }
  std::vector<double> logits(static_cast<std::size_t>(m.class_count));
  for (int k = 0; k < m.class_count; ++k) {
    double acc = m.head_bias(k);
    for (std::size_t j = 0; j < pooled.size(); ++j) acc += m.head_weight(k, static_cast<Eigen::Index>(j)) * pooled[j];
    logits[k] = acc;
  }
  return logits;
}

// Non-trivial normalization statistics so inference mode is exercised.
void randomize_norms(nn::StageModel& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5), n(-0.3, 0.3);
  for (auto& s : m.stages) {
    if (!s.norm) continue;
    for (int o = 0; o < s.out_channels; ++o) {
      s.running_mean(o) = n(rng);
      s.running_var(o) = u(rng);
      s.norm_scale(o) = u(rng);
      s.norm_shift(o) = n(rng);
    }
  }
  for (Eigen::Index i = 0; i < m.head_bias.size(); ++i) m.head_bias(i) = n(rng);
}

}  // namespace

TEST_CASE("build_model shapes") {
  const auto mlp = nn::build_model(nn::arch_from_name("mlp5"), {64, 1, 1}, 10, 42);
  CHECK(mlp.stage_count() == 5);
  CHECK(mlp.head_weight.rows() == 10);
  CHECK(mlp.head_weight.cols() == mlp.stages.back().out_channels);
  CHECK(mlp.stages.front().weight.cols() == 64);

  const auto cnn = nn::build_model(nn::arch_from_name("cnn5-mini"), {1, 16, 16}, 10, 42);
  CHECK(cnn.stage_count() == 5);
  CHECK(cnn.head_weight.rows() == 10);
  CHECK(cnn.head_weight.cols() == cnn.stages.back().out_channels);
  CHECK(cnn.stages.front().weight.cols() == 9);
  CHECK_THROWS_AS(nn::arch_from_name("resnet"), Error);
  CHECK_THROWS_AS(nn::build_model(nn::arch_from_name("mlp5"), {64, 1, 1}, 1, 42), Error);
}

TEST_CASE("build_model is deterministic in the seed") {
  const auto arch = nn::arch_from_name("cnn5-mini");
  const auto a = nn::build_model(arch, {1, 16, 16}, 10, 42);
  const auto b = nn::build_model(arch, {1, 16, 16}, 10, 42);
  const auto c = nn::build_model(arch, {1, 16, 16}, 10, 43);
  CHECK(nn::fingerprint(a) == nn::fingerprint(b));
  CHECK(a.stages[2].weight == b.stages[2].weight);
  CHECK(nn::fingerprint(a) != nn::fingerprint(c));
}

TEST_CASE("zero weights give zero logits") {
  auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), {8, 1, 1}, 3, 1);
  m = nn::zeros_like(m);
  const auto d = testing::blobs(3, 4, {8, 1, 1}, 2);
  const auto t = nn::forward(m, data::make_batch(d, 0, d.size()), false);
  CHECK(t.logits.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches a direct evaluation") {
  SUBCASE("mlp5-tiny") {
    auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), {12, 1, 1}, 4, 7);
    randomize_norms(m, 1);
    const auto d = testing::blobs(4, 3, {12, 1, 1}, 3);
    const auto t = nn::forward(m, data::make_batch(d, 0, d.size()), false);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto want = direct_logits(m, d, i);
      for (int k = 0; k < m.class_count; ++k) CHECK(t.logits(k, static_cast<Eigen::Index>(i)) == doctest::Approx(want[k]).epsilon(1e-12));
    }
  }
  SUBCASE("cnn5-mini-tiny") {
    auto m = nn::build_model(nn::arch_from_name("cnn5-mini-tiny"), {2, 8, 8}, 3, 9);
    randomize_norms(m, 2);
    const auto d = testing::blobs(3, 2, {2, 8, 8}, 4);
    const auto t = nn::forward(m, data::make_batch(d, 0, d.size()), false);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto want = direct_logits(m, d, i);
      for (int k = 0; k < m.class_count; ++k) {
        CHECK(std::abs(t.logits(k, static_cast<Eigen::Index>(i)) - want[k]) < 1e-10);
      }
    }
  }
}

TEST_CASE("inference forward is independent of batch composition") {
  auto m = nn::build_model(nn::arch_from_name("cnn5-mini"), {1, 16, 16}, 10, 5);
  randomize_norms(m, 3);
  const auto d = testing::blobs(10, 4, {1, 16, 16}, 6);
  const auto full = nn::forward(m, data::make_batch(d, 0, 32), false);
  for (std::size_t i : {0u, 7u, 31u}) {
    const auto one = nn::forward(m, data::make_batch(d, i, i + 1), false);
    CHECK((one.logits.col(0) - full.logits.col(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("gap") {
  nn::FeatureMap a;
  a.samples = 2;
  a.data = Matrix(3, 2);
  a.data << 1, 2, 3, 4, 5, 6;
  CHECK(nn::gap(a) == a.data);

  nn::FeatureMap c;
  c.samples = 1;
  c.height = c.width = 4;
  c.data = Matrix::Constant(2, 16, 2.0);
  CHECK(nn::gap(c).cwiseAbs().maxCoeff() == 2.0);
  CHECK(nn::gap(c).minCoeff() == 2.0);

  std::mt19937_64 rng(4);
  nn::FeatureMap r;
  r.samples = 3;
  r.height = r.width = 4;
  r.data = testing::random_matrix(5, 48, rng);
  const Matrix g = nn::gap(r);
  for (int ch = 0; ch < 5; ++ch) {
    for (int s = 0; s < 3; ++s) {
      double sum = 0.0;
      for (int p = 0; p < 16; ++p) sum += r.data(ch, s * 16 + p);
      CHECK(g(ch, s) == doctest::Approx(sum / 16.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("edit space of an mlp stage is the stage output") {
  auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), {10, 1, 1}, 3, 2);
  const auto d = testing::blobs(3, 5, {10, 1, 1}, 1);
  const auto batch = data::make_batch(d, 0, d.size());
  const auto t = nn::forward(m, batch, true);
  for (int l = 1; l <= 5; ++l) {
    const auto z = nn::edit_space_vectors(m, batch, l);
    CHECK(z.locations == d.size());
    CHECK(z.vectors.cols() == static_cast<Eigen::Index>(d.size()));
    CHECK((z.vectors - t.stages[l - 1].data).cwiseAbs().maxCoeff() == 0.0);
    CHECK(nn::edit_dim(m, l) == m.stages[l - 1].out_channels);
  }
}

TEST_CASE("unfolded constant image repeats the constant at interior locations") {
  nn::FeatureMap in;
  in.samples = 1;
  in.height = in.width = 5;
  in.data = Matrix::Constant(2, 25, 0.75);
  const Matrix cols = nn::im2col(in, 3, 1);
  CHECK(cols.rows() == 18);
  CHECK(cols.cols() == 25);
  const Eigen::Index interior = 2 * 5 + 2;
  CHECK(cols.col(interior).minCoeff() == 0.75);
  CHECK(cols.col(interior).maxCoeff() == 0.75);
  CHECK(cols.col(0).minCoeff() == 0.0);  // corner sees padding
}

TEST_CASE("unfolded edit vectors reproduce the next convolution") {
  auto m = nn::build_model(nn::arch_from_name("cnn5-mini-tiny"), {1, 16, 16}, 4, 3);
  randomize_norms(m, 4);
  const auto d = testing::blobs(4, 2, {1, 16, 16}, 5);
  const auto batch = data::make_batch(d, 0, d.size());
  const auto t = nn::forward(m, batch, true);
  for (int l = 1; l <= 4; ++l) {
    const auto& next = m.stages[static_cast<std::size_t>(l)];
    const auto z = nn::edit_space_vectors(m, batch, l);
    Matrix via_unfold = next.weight * z.vectors;
    via_unfold.colwise() += next.bias;
    // Direct convolution of the captured stage-l activation.
    const auto& a = t.stages[static_cast<std::size_t>(l - 1)];
    for (int s = 0; s < a.samples; ++s) {
      Tensor in(a.channels(), std::vector<std::vector<double>>(a.height, std::vector<double>(a.width)));
      for (int c = 0; c < a.channels(); ++c)
        for (int y = 0; y < a.height; ++y)
          for (int x = 0; x < a.width; ++x) in[c][y][x] = a.data(c, (s * a.height + y) * a.width + x);
      const Tensor out = conv_direct(in, next);
      for (int o = 0; o < next.out_channels; ++o)
        for (int y = 0; y < a.height; ++y)
          for (int x = 0; x < a.width; ++x)
            CHECK(std::abs(via_unfold(o, (s * a.height + y) * a.width + x) - out[o][y][x]) <= 1e-6);
    }
  }
  // The head stage uses GAP features.
  const auto z5 = nn::edit_space_vectors(m, batch, 5);
  CHECK((z5.vectors - t.pooled[4]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 rng(12);
  nn::FeatureMap x;
  x.samples = 2;
  x.height = 4;
  x.width = 3;
  x.data = testing::random_matrix(3, 24, rng);
  const Matrix cols = nn::im2col(x, 3, 1);
  const Matrix y = testing::random_matrix(cols.rows(), cols.cols(), rng);
  const auto back = nn::col2im(y, 3, 2, 4, 3, 3, 1);
  CHECK(cols.cwiseProduct(y).sum() == doctest::Approx(x.data.cwiseProduct(back.data).sum()).epsilon(1e-12));
}

TEST_CASE("training fits two separable blobs") {
  const auto d = testing::blobs(2, 50, {16, 1, 1}, 3, data::Split::Train, 10.0);
  auto m = nn::build_model(nn::arch_from_name("mlp5"), d.shape, 2, 1);
  nn::TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  nn::train(m, d, cfg);
  CHECK(metrics::accuracy(m, d) >= 99.0);
}

TEST_CASE("learning rate zero leaves the weights alone") {
  const auto d = testing::blobs(3, 10, {8, 1, 1}, 3);
  auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), d.shape, 3, 1);
  const auto before = nn::fingerprint(m);
  const double loss0 = nn::evaluate_loss(m, d);
  nn::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  const auto losses = nn::train(m, d, cfg).epoch_loss;
  CHECK(nn::fingerprint(m) == before);
  CHECK(nn::evaluate_loss(m, d) == loss0);
  REQUIRE(losses.size() == 3);
  CHECK(losses[1] == doctest::Approx(losses[0]).epsilon(1e-12));
  CHECK(losses[2] == doctest::Approx(losses[0]).epsilon(1e-12));
}

TEST_CASE("one epoch lowers the loss on ten blobs") {
  const auto d = testing::blobs(10, 30, {64, 1, 1}, 1);
  auto m = nn::build_model(nn::arch_from_name("mlp5"), d.shape, 10, 2);
  const double before = nn::evaluate_loss(m, d);
  nn::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 32;
  nn::train(m, d, cfg);
  CHECK(nn::evaluate_loss(m, d) < before);
}

TEST_CASE("training is deterministic") {
  const auto d = testing::blobs(4, 20, {1, 8, 8}, 1);
  auto a = nn::build_model(nn::arch_from_name("cnn5-mini-tiny"), d.shape, 4, 3);
  auto b = a;
  nn::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  const auto la = nn::train(a, d, cfg).epoch_loss;
  const auto lb = nn::train(b, d, cfg).epoch_loss;
  CHECK(la == lb);
  CHECK(nn::fingerprint(a) == nn::fingerprint(b));
}

TEST_CASE("cross entropy excludes masked classes") {
  Matrix logits(3, 1);
  logits << 1.0, 2.0, 5.0;
  const std::vector<int> labels{1};
  const std::vector<int> mask{2};
  const auto lg = nn::cross_entropy(logits, labels, 1.0, mask);
  const double want = -std::log(std::exp(2.0) / (std::exp(1.0) + std::exp(2.0)));
  CHECK(lg.loss == doctest::Approx(want).epsilon(1e-12));
  CHECK(lg.dlogits(2, 0) == 0.0);
}

TEST_CASE("predict breaks ties toward the lowest class") {
  Matrix logits = Matrix::Zero(4, 2);
  logits(3, 1) = 1.0;
  logits(2, 1) = 1.0;
  const auto p = nn::predict(logits);
  CHECK(p[0] == 0);
  CHECK(p[1] == 2);
}

TEST_CASE("gradients agree with finite differences") {
  SUBCASE("mlp5-tiny") {
    // Central differences are only valid away from ReLU kinks; this draw has
    // no pre-activation within h of zero.
    const auto d = testing::blobs(3, 4, {6, 1, 1}, 1, data::Split::Train, 3.0);
    const auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), d.shape, 3, 4);
    CHECK(nn::gradient_check(m, data::make_batch(d, 0, d.size()), d.labels, 7, 200) <= 1e-4);
  }
  SUBCASE("cnn5-mini-tiny") {
    const auto d = testing::blobs(3, 2, {1, 8, 8}, 2, data::Split::Train, 3.0);
    auto m = nn::build_model(nn::arch_from_name("cnn5-mini-tiny"), d.shape, 3, 4);
    CHECK(nn::gradient_check(m, data::make_batch(d, 0, d.size()), d.labels, 7, 200) <= 1e-4);
  }
}

TEST_CASE("a saturated model has near-zero gradients both ways") {
  const auto d = testing::blobs(3, 3, {6, 1, 1}, 2);
  auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), d.shape, 3, 4);
  m.head_weight.setZero();
  m.head_bias << 60.0, 0.0, 0.0;
  const std::vector<int> labels(d.size(), 0);
  const auto batch = data::make_batch(d, 0, d.size());
  const auto fr = nn::forward_with_cache(m, batch, nn::Mode::Training);
  const auto lg = nn::cross_entropy(fr.logits, labels);
  CHECK(lg.loss < 1e-20);
  const auto g = nn::backward(m, fr.cache, lg.dlogits);
  double worst = 0.0;
  nn::for_each_parameter(g, [&](const std::string&, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(p[i]));
  });
  CHECK(worst < 1e-20);
  CHECK(nn::gradient_check(m, batch, labels) <= 1e-4);
}

TEST_CASE("adversarial batches") {
  const auto train = testing::blobs(4, 40, {16, 1, 1}, 5, data::Split::Train, 3.0);
  const auto m = testing::trained_mlp(train, 5, 20);
  const auto test = testing::blobs(4, 40, {16, 1, 1}, 5, data::Split::Test, 3.0);
  const auto batch = data::make_batch(test, 0, test.size());

  for (auto attack : {nn::Attack::Fgsm, nn::Attack::Pgd}) {
    nn::AttackConfig cfg;
    cfg.attack = attack;
    cfg.epsilon = 0.0;
    const auto same = nn::adversarial_batch(m, batch, test.labels, cfg);
    CHECK(same.data == batch.data);

    cfg.epsilon = 0.05;
    cfg.step_size = 0.0125;
    const auto adv = nn::adversarial_batch(m, batch, test.labels, cfg);
    CHECK((adv.data - batch.data).cwiseAbs().maxCoeff() <= 0.05 + 1e-9);
    CHECK(adv.data.minCoeff() >= 0.0);
    CHECK(adv.data.maxCoeff() <= 1.0);
  }
  nn::AttackConfig fgsm;
  fgsm.epsilon = 0.1;
  const double clean = metrics::accuracy(m, test);
  CHECK(metrics::adversarial_accuracy(m, test, fgsm) < clean);

  nn::AttackConfig bad;
  bad.epsilon = -1.0;
  CHECK_THROWS_AS(nn::adversarial_batch(m, batch, test.labels, bad), Error);
}
