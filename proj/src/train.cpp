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

#include "damp/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "damp/data.hpp"
#include "damp/error.hpp"

namespace damp::nn {

namespace {

std::atomic<std::uint64_t> g_backward_passes{0};

std::vector<std::span<double>> parameter_spans(StageModel& model) {
  std::vector<std::span<double>> out;
  for_each_parameter(model, [&](const std::string&, double* p, std::size_t n) {
    out.emplace_back(p, n);
  });
  return out;
}

FeatureMap unflatten(const Matrix& x, int channels, int samples, int height, int width) {
  FeatureMap f;
  f.samples = samples;
  f.height = height;
  f.width = width;
  const int loc = height * width;
  if (loc == 1) {
    f.data = x;
    return f;
  }
  f.data.resize(channels, static_cast<Eigen::Index>(samples) * loc);
  for (int s = 0; s < samples; ++s) {
    for (int c = 0; c < channels; ++c) {
      for (int p = 0; p < loc; ++p) {
        f.data(c, static_cast<Eigen::Index>(s) * loc + p) =
            x(static_cast<Eigen::Index>(c) * loc + p, s);
      }
    }
  }
  return f;
}

}  // namespace

std::uint64_t backward_pass_count() { return g_backward_passes.load(); }

StageModel backward(const StageModel& model, const ForwardCache& cache, const Matrix& dlogits,
                    FeatureMap* input_grad) {
  g_backward_passes.fetch_add(1);
  StageModel grads = zeros_like(model);
  const Eigen::Index samples = dlogits.cols();

  grads.head_weight = dlogits * cache.pooled.transpose();
  grads.head_bias = dlogits.rowwise().sum();
  const Matrix dpooled = model.head_weight.transpose() * dlogits;

  const int loc = cache.last_height * cache.last_width;
  Matrix d(dpooled.rows(), samples * loc);
  for (Eigen::Index s = 0; s < samples; ++s) {
    for (int p = 0; p < loc; ++p) d.col(s * loc + p) = dpooled.col(s) / loc;
  }
  int d_height = cache.last_height;
  int d_width = cache.last_width;

  for (int i = model.stage_count() - 1; i >= 0; --i) {
    const Stage& st = model.stages[static_cast<std::size_t>(i)];
    const StageCache& sc = cache.stages[static_cast<std::size_t>(i)];
    Stage& g = grads.stages[static_cast<std::size_t>(i)];

    Matrix dact;
    if (st.pool) {
      dact = Matrix::Zero(d.rows(), samples * sc.act_height * sc.act_width);
      for (Eigen::Index ch = 0; ch < d.rows(); ++ch) {
        for (Eigen::Index oc = 0; oc < d.cols(); ++oc) {
          dact(ch, sc.pool_index[static_cast<std::size_t>(ch * d.cols() + oc)]) += d(ch, oc);
        }
      }
    } else {
      dact = std::move(d);
    }
    dact = (sc.pre_activation.array() > 0.0).select(dact, 0.0);

    Matrix dy;
    if (st.norm) {
      g.norm_scale = (dact.array() * sc.normalized.array()).rowwise().sum();
      g.norm_shift = dact.rowwise().sum();
      const Matrix dxhat = dact.array().colwise() * st.norm_scale.array();
      if (cache.mode == Mode::Training) {
        const double m = static_cast<double>(dxhat.cols());
        const Vector sum_dxhat = dxhat.rowwise().sum();
        const Vector sum_dxhat_xhat = (dxhat.array() * sc.normalized.array()).rowwise().sum();
        Matrix t = (m * dxhat).colwise() - sum_dxhat;
        t -= (sc.normalized.array().colwise() * sum_dxhat_xhat.array()).matrix();
        dy = (t.array().colwise() * (sc.inv_std.array() / m)).matrix();
      } else {
        dy = dxhat.array().colwise() * sc.inv_std.array();
      }
    } else {
      dy = std::move(dact);
    }

    g.weight = dy * sc.op_input.transpose();
    g.bias = dy.rowwise().sum();

    if (i > 0 || input_grad != nullptr) {
      const Matrix din = st.weight.transpose() * dy;
      FeatureMap prev;
      if (st.op == OpKind::Conv) {
        prev = col2im(din, st.in_channels, sc.in_samples, sc.in_height, sc.in_width, st.kernel,
                      st.padding);
      } else {
        const int in_loc = sc.in_height * sc.in_width;
        prev = unflatten(din, st.in_channels / in_loc, sc.in_samples, sc.in_height,
                         sc.in_width);
      }
      d = std::move(prev.data);
      d_height = prev.height;
      d_width = prev.width;
    }
  }

  if (input_grad != nullptr) {
    input_grad->data = std::move(d);
    input_grad->samples = static_cast<int>(samples);
    input_grad->height = d_height;
    input_grad->width = d_width;
  }
  return grads;
}

void update_running_stats(StageModel& model, const ForwardCache& cache, double momentum) {
  if (cache.mode != Mode::Training) return;
  for (std::size_t i = 0; i < model.stages.size(); ++i) {
    Stage& st = model.stages[i];
    if (!st.norm) continue;
    const StageCache& sc = cache.stages[i];
    const double m = static_cast<double>(sc.pre_activation.cols());
    const double unbias = m > 1.0 ? m / (m - 1.0) : 1.0;
    st.running_mean = (1.0 - momentum) * st.running_mean + momentum * sc.batch_mean;
    st.running_var = (1.0 - momentum) * st.running_var + momentum * unbias * sc.batch_var;
  }
}

LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels, double scale,
                       std::span<const int> masked) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.cols(), ErrorKind::InvalidArgument,
          "label count does not match batch size");
  std::vector<bool> is_masked(static_cast<std::size_t>(logits.rows()), false);
  for (int c : masked) {
    if (c >= 0 && c < logits.rows()) is_masked[static_cast<std::size_t>(c)] = true;
  }
  LossGrad out;
  out.dlogits = Matrix::Zero(logits.rows(), logits.cols());
  const double n = static_cast<double>(logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    require(y >= 0 && y < logits.rows(), ErrorKind::InvalidArgument, "label out of range");
    // A sample whose label is masked has no finite loss; it contributes nothing.
    if (is_masked[static_cast<std::size_t>(y)]) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      if (!is_masked[static_cast<std::size_t>(i)]) mx = std::max(mx, logits(i, j));
    }
    double z = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      if (!is_masked[static_cast<std::size_t>(i)]) z += std::exp(logits(i, j) - mx);
    }
    const double log_z = mx + std::log(z);
    out.loss += (log_z - logits(y, j)) / n;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      if (is_masked[static_cast<std::size_t>(i)]) continue;
      out.dlogits(i, j) = std::exp(logits(i, j) - log_z) / n;
    }
    out.dlogits(y, j) -= 1.0 / n;
  }
  out.loss *= scale;
  out.dlogits *= scale;
  return out;
}

void validate(const TrainConfig& cfg) {
  require(cfg.learning_rate >= 0.0, ErrorKind::InvalidArgument,
          "learning rate must be non-negative");
  require(cfg.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be non-negative");
  require(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
  require(cfg.weight_decay >= 0.0, ErrorKind::InvalidArgument,
          "weight decay must be non-negative");
}

Optimizer::Optimizer(const StageModel& model, const TrainConfig& cfg) : cfg_(cfg) {
  for_each_parameter(model, [&](const std::string&, const double*, std::size_t n) {
    first_.emplace_back(n, 0.0);
    second_.emplace_back(cfg.optimizer == OptimizerKind::Adam ? n : 0, 0.0);
  });
}

void Optimizer::step(StageModel& model, const StageModel& grads, double lr) {
  ++step_count_;
  auto params = parameter_spans(model);
  auto gs = parameter_spans(const_cast<StageModel&>(grads));
  const double wd = cfg_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = gs[k];
    auto& m = first_[k];
    if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + wd * p[i];
        m[i] = step_count_ == 1 ? gi : cfg_.momentum * m[i] + gi;
        p[i] -= lr * m[i];
      }
    } else {
      auto& v = second_[k];
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = g[i] + wd * p[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps);
      }
    }
  }
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
  if (!cfg.cosine_schedule || cfg.epochs <= 0) return cfg.learning_rate;
  return cfg.learning_rate * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / cfg.epochs));
}

TrainResult train(StageModel& model, const data::LabeledDataset& data, const TrainConfig& cfg) {
  validate(cfg);
  require(!data.empty(), ErrorKind::InvalidArgument, "cannot train on an empty dataset");
  for (int y : data.labels) {
    require(y >= 0 && y < model.class_count, ErrorKind::InvalidArgument,
            "label outside the model's class range");
  }

  TrainResult result;
  Optimizer opt(model, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = scheduled_lr(cfg, epoch);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      std::span<const std::size_t> idx(order.data() + b, e - b);
      const FeatureMap batch = data::make_batch(data, idx);
      const std::vector<int> labels = data::batch_labels(data, idx);
      ForwardResult fr = forward_with_cache(model, batch, Mode::Training);
      const LossGrad lg = cross_entropy(fr.logits, labels);
      const StageModel grads = backward(model, fr.cache, lg.dlogits);
      opt.step(model, grads, lr);
      update_running_stats(model, fr.cache);
      total += lg.loss * static_cast<double>(e - b);
    }
    result.epoch_loss.push_back(total / static_cast<double>(order.size()));
  }
  return result;
}

double evaluate_loss(const StageModel& model, const data::LabeledDataset& data) {
  require(!data.empty(), ErrorKind::InvalidArgument, "cannot evaluate an empty dataset");
  double total = 0.0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t b = 0; b < data.size(); b += kChunk) {
    const std::size_t e = std::min(data.size(), b + kChunk);
    const FeatureMap batch = data::make_batch(data, b, e);
    const ActivationTrace t = forward(model, batch, false);
    std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(b),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(e));
    Matrix raw = t.logits;
    const LossGrad lg = cross_entropy(raw, labels, 1.0, model.output_mask);
    total += lg.loss * static_cast<double>(e - b);
  }
  return total / static_cast<double>(data.size());
}

double gradient_check(const StageModel& model, const FeatureMap& batch,
                      std::span<const int> labels, std::uint64_t seed, std::size_t max_params,
                      double h) {
  auto loss_of = [&](const StageModel& m) {
    const ForwardResult fr = forward_with_cache(m, batch, Mode::Training);
    return cross_entropy(fr.logits, labels).loss;
  };

  const ForwardResult fr = forward_with_cache(model, batch, Mode::Training);
  const LossGrad lg = cross_entropy(fr.logits, labels);
  StageModel grads = backward(model, fr.cache, lg.dlogits);
  const auto gspans = parameter_spans(grads);

  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t k = 0; k < gspans.size(); ++k) {
    for (std::size_t i = 0; i < gspans[k].size(); ++i) all.emplace_back(k, i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  if (all.size() > max_params) all.resize(max_params);

  double worst = 0.0;
  StageModel probe = model;
  auto pspans = parameter_spans(probe);
  for (const auto& [k, i] : all) {
    const double original = pspans[k][i];
    pspans[k][i] = original + h;
    const double plus = loss_of(probe);
    pspans[k][i] = original - h;
    const double minus = loss_of(probe);
    pspans[k][i] = original;
    const double numeric = (plus - minus) / (2.0 * h);
    const double analytic = gspans[k][i];
    const double denom = std::max(1e-6, std::abs(numeric) + std::abs(analytic));
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  }
  return worst;
}

FeatureMap adversarial_batch(const StageModel& model, const FeatureMap& batch,
                             std::span<const int> labels, const AttackConfig& cfg) {
  require(cfg.epsilon >= 0.0, ErrorKind::InvalidArgument, "epsilon must be non-negative");
  require(cfg.attack != Attack::Pgd || cfg.steps >= 1, ErrorKind::InvalidArgument,
          "PGD needs at least one step");
  require(static_cast<int>(labels.size()) == batch.samples, ErrorKind::InvalidArgument,
          "label count does not match batch size");
  if (cfg.epsilon == 0.0) return batch;

  auto input_gradient = [&](const FeatureMap& x) {
    const ForwardResult fr = forward_with_cache(model, x, Mode::Inference);
    const LossGrad lg = cross_entropy(fr.logits, labels, 1.0, model.output_mask);
    FeatureMap g;
    backward(model, fr.cache, lg.dlogits, &g);
    return g.data;
  };
  auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };

  FeatureMap adv = batch;
  if (cfg.attack == Attack::Fgsm) {
    const Matrix g = input_gradient(batch);
    adv.data = (batch.data + cfg.epsilon * g.unaryExpr(sign))
                   .cwiseMax(cfg.lower)
                   .cwiseMin(cfg.upper);
    return adv;
  }

  const Matrix lo = (batch.data.array() - cfg.epsilon).matrix();
  const Matrix hi = (batch.data.array() + cfg.epsilon).matrix();
  for (int step = 0; step < cfg.steps; ++step) {
    const Matrix g = input_gradient(adv);
    adv.data += cfg.step_size * g.unaryExpr(sign);
    adv.data = adv.data.cwiseMax(lo).cwiseMin(hi).cwiseMax(cfg.lower).cwiseMin(cfg.upper);
  }
  return adv;
}

}  // namespace damp::nn
