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

#include "damp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "damp/error.hpp"
#include "damp/metrics.hpp"

namespace damp::baselines {

using nn::FeatureMap;
using nn::StageModel;

std::string_view method_tag(Method m) {
  switch (m) {
    case Method::Retrain: return "retrain";
    case Method::LogitMask: return "lm";
    case Method::Gau: return "gau";
    case Method::Kdu: return "kdu";
    case Method::Ddft: return "ddft";
    case Method::RandRelabel: return "randrelabel";
  }
  return "unknown";
}

Method method_from_tag(std::string_view tag) {
  for (Method m : {Method::Retrain, Method::LogitMask, Method::Gau, Method::Kdu, Method::Ddft,
                   Method::RandRelabel}) {
    if (method_tag(m) == tag) return m;
  }
  fail(ErrorKind::InvalidArgument, "unknown method '" + std::string(tag) + "'");
}

BaselineConfig default_config(Method m) {
  BaselineConfig c;
  c.method = m;
  if (m == Method::Ddft) c.learning_rate = 5e-4;
  if (m == Method::LogitMask) c.epochs = 0;
  return c;
}

void validate(const BaselineConfig& cfg) {
  require(cfg.learning_rate > 0.0, ErrorKind::InvalidArgument, "learning rate must be positive");
  require(cfg.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
  require(cfg.lambda_gau >= 0.0 && cfg.lambda_kdu >= 0.0, ErrorKind::InvalidArgument,
          "lambda must be non-negative");
  require(cfg.temperature > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
  if (cfg.method == Method::LogitMask) {
    require(cfg.epochs == 0, ErrorKind::InvalidArgument, "logit masking takes no epochs");
  } else if (cfg.method == Method::Ddft) {
    require(cfg.epochs >= 0, ErrorKind::InvalidArgument, "epochs must be non-negative");
  } else {
    require(cfg.epochs >= 1, ErrorKind::InvalidArgument, "epochs must be at least 1");
  }
}

namespace {

nn::TrainConfig adam_config(const BaselineConfig& cfg) {
  nn::TrainConfig t;
  t.optimizer = nn::OptimizerKind::Adam;
  t.learning_rate = cfg.learning_rate;
  t.weight_decay = 0.0;
  t.epochs = cfg.epochs;
  t.batch_size = cfg.batch_size;
  t.seed = cfg.seed;
  return t;
}

FeatureMap concat(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out;
  out.height = a.height;
  out.width = a.width;
  out.samples = a.samples + b.samples;
  out.data.resize(a.data.rows(), a.data.cols() + b.data.cols());
  out.data << a.data, b.data;
  return out;
}

// Cycles through a shuffled index list, reshuffling at every wrap.
class Cycler {
 public:
  Cycler(std::size_t n, std::mt19937_64& rng) : order_(n), rng_(rng) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> take(std::size_t k) {
    std::vector<std::size_t> out;
    while (out.size() < k) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64& rng_;
  std::size_t pos_ = 0;
};

// Loss on a joint batch: retain columns first, forget columns after.
using PairLoss = std::function<nn::LossGrad(const Matrix& logits, const FeatureMap& batch,
                                            std::span<const int> retain_labels,
                                            std::span<const int> forget_labels)>;

// One pass over retain data per epoch; every retain batch is joined by a
// proportionally sized forget batch drawn cyclically.
void paired_fine_tune(StageModel& model, const data::LabeledDataset& retain,
                      const data::LabeledDataset& forget, const BaselineConfig& cfg,
                      const PairLoss& loss) {
  require(!retain.empty() && !forget.empty(), ErrorKind::InvalidArgument,
          "fine-tuning needs retain and forget data");
  const nn::TrainConfig tc = adam_config(cfg);
  nn::Optimizer opt(model, tc);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(retain.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Cycler forget_cycle(forget.size(), rng);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const double ratio = static_cast<double>(forget.size()) / static_cast<double>(retain.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const std::span<const std::size_t> ri(order.data() + b, e - b);
      const auto nf = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(e - b))));
      const auto fi = forget_cycle.take(nf);
      const FeatureMap batch = concat(data::make_batch(retain, ri), data::make_batch(forget, fi));
      const auto yr = data::batch_labels(retain, ri);
      const auto yf = data::batch_labels(forget, fi);
      nn::ForwardResult fr = nn::forward_with_cache(model, batch, nn::Mode::Training);
      const nn::LossGrad lg = loss(fr.logits, batch, yr, yf);
      require(std::isfinite(lg.loss), ErrorKind::Numeric, "fine-tuning loss is not finite");
      const StageModel grads = nn::backward(model, fr.cache, lg.dlogits);
      opt.step(model, grads, tc.learning_rate);
      nn::update_running_stats(model, fr.cache);
    }
  }
}

// Cross-entropy fine-tuning; `labels_for_epoch` may rewrite labels each epoch.
void ce_fine_tune(StageModel& model, const data::LabeledDataset& data, const BaselineConfig& cfg,
                  const std::function<std::vector<int>(std::mt19937_64&)>& labels_for_epoch) {
  require(!data.empty(), ErrorKind::InvalidArgument, "cannot fine-tune on an empty dataset");
  const nn::TrainConfig tc = adam_config(cfg);
  nn::Optimizer opt(model, tc);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> labels = labels_for_epoch(rng);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::size_t e = std::min(order.size(), b + bs);
      const std::span<const std::size_t> idx(order.data() + b, e - b);
      std::vector<int> y;
      for (std::size_t i : idx) y.push_back(labels[i]);
      nn::ForwardResult fr = nn::forward_with_cache(model, data::make_batch(data, idx), nn::Mode::Training);
      const nn::LossGrad lg = nn::cross_entropy(fr.logits, y, 1.0, model.output_mask);
      const StageModel grads = nn::backward(model, fr.cache, lg.dlogits);
      opt.step(model, grads, tc.learning_rate);
      nn::update_running_stats(model, fr.cache);
    }
  }
}

Matrix log_softmax_cols(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mx = z.col(j).maxCoeff();
    const double lse = mx + std::log((z.col(j).array() - mx).exp().sum());
    out.col(j) = z.col(j).array() - lse;
  }
  return out;
}

}  // namespace

StageModel retrain(const nn::ArchSpec& arch, const nn::InputShape& input, int class_count,
                   const data::LabeledDataset& retain, const data::ForgetSpec& forget,
                   const nn::TrainConfig& cfg) {
  data::validate(forget, class_count);
  for (int y : retain.labels) {
    require(forget.classes.count(y) == 0, ErrorKind::Contamination,
            "retain data contains a sample of forget class " + std::to_string(y));
  }
  const std::set<int> present = data::present_classes(retain);
  require(!present.empty(), ErrorKind::InvalidArgument, "retraining needs retain data");
  if (present.size() == 1) {
    // Nothing to separate: every other output is masked, so the one class wins.
    StageModel only = nn::build_model(arch, input, class_count, cfg.seed);
    only.head_weight.setZero();
    for (int c = 0; c < class_count; ++c) {
      if (present.count(c) == 0) only.output_mask.push_back(c);
    }
    return only;
  }
  std::vector<int> to_full(present.begin(), present.end());
  std::map<int, int> to_local;
  for (std::size_t k = 0; k < to_full.size(); ++k) to_local[to_full[k]] = static_cast<int>(k);

  data::LabeledDataset local = retain;
  local.class_count = static_cast<int>(to_full.size());
  for (int& y : local.labels) y = to_local.at(y);

  StageModel small = nn::build_model(arch, input, local.class_count, cfg.seed);
  nn::train(small, local, cfg);

  StageModel full = small;
  full.class_count = class_count;
  full.head_weight = Matrix::Zero(class_count, small.head_weight.cols());
  full.head_bias = nn::Vector::Zero(class_count);
  for (std::size_t k = 0; k < to_full.size(); ++k) {
    full.head_weight.row(to_full[k]) = small.head_weight.row(static_cast<Eigen::Index>(k));
    full.head_bias(to_full[k]) = small.head_bias(static_cast<Eigen::Index>(k));
  }
  full.output_mask.clear();
  for (int c = 0; c < class_count; ++c) {
    if (present.count(c) == 0) full.output_mask.push_back(c);
  }
  return full;
}

StageModel logit_mask(const StageModel& model, const data::ForgetSpec& forget) {
  data::validate(forget, model.class_count);
  StageModel out = model;
  std::set<int> mask(model.output_mask.begin(), model.output_mask.end());
  mask.insert(forget.classes.begin(), forget.classes.end());
  out.output_mask.assign(mask.begin(), mask.end());
  return out;
}

StageModel gau(const StageModel& model, const data::LabeledDataset& retain,
               const data::LabeledDataset& forget, const BaselineConfig& cfg) {
  validate(cfg);
  StageModel out = model;
  const double lambda = cfg.lambda_gau;
  paired_fine_tune(out, retain, forget, cfg,
                   [&](const Matrix& logits, const FeatureMap&, std::span<const int> yr,
                       std::span<const int> yf) {
                     const auto nr = static_cast<Eigen::Index>(yr.size());
                     const auto nf = static_cast<Eigen::Index>(yf.size());
                     const auto a = nn::cross_entropy(logits.leftCols(nr), yr, 1.0);
                     const auto b = nn::cross_entropy(logits.rightCols(nf), yf, -lambda);
                     nn::LossGrad lg;
                     lg.loss = a.loss + b.loss;
                     lg.dlogits.resize(logits.rows(), logits.cols());
                     lg.dlogits << a.dlogits, b.dlogits;
                     return lg;
                   });
  return out;
}

KlGrad kl_to_reference(const Matrix& student_logits, const Matrix& reference_logits, double t) {
  require(student_logits.rows() == reference_logits.rows() &&
              student_logits.cols() == reference_logits.cols(),
          ErrorKind::InvalidArgument, "logit shapes differ");
  const Matrix lp = log_softmax_cols(student_logits / t);
  const Matrix lq = log_softmax_cols(reference_logits / t);
  const Matrix p = lp.array().exp();
  const double n = static_cast<double>(student_logits.cols());
  KlGrad out;
  out.grad.resize(student_logits.rows(), student_logits.cols());
  for (Eigen::Index j = 0; j < student_logits.cols(); ++j) {
    const auto diff = (lp.col(j) - lq.col(j)).array();
    const double kl = (p.col(j).array() * diff).sum();
    out.loss += kl / n;
    out.grad.col(j) = (p.col(j).array() * (diff - kl)).matrix() / (t * n);
  }
  return out;
}

KlGrad kl_to_uniform(const Matrix& student_logits) {
  const Matrix uniform = Matrix::Zero(student_logits.rows(), student_logits.cols());
  return kl_to_reference(student_logits, uniform, 1.0);
}

StageModel kdu(const StageModel& model, const data::LabeledDataset& retain,
               const data::LabeledDataset& forget, const BaselineConfig& cfg) {
  validate(cfg);
  const StageModel teacher = model;
  StageModel out = model;
  const double t = cfg.temperature;
  const double lambda = cfg.lambda_kdu;
  paired_fine_tune(out, retain, forget, cfg,
                   [&](const Matrix& logits, const FeatureMap& batch, std::span<const int> yr,
                       std::span<const int> yf) {
                     const auto nr = static_cast<Eigen::Index>(yr.size());
                     const auto nf = static_cast<Eigen::Index>(yf.size());
                     const Matrix teacher_logits =
                         nn::forward_with_cache(teacher, batch, nn::Mode::Inference).logits;
                     const KlGrad a = kl_to_reference(logits.leftCols(nr),
                                                      teacher_logits.leftCols(nr), t);
                     const KlGrad b = kl_to_uniform(logits.rightCols(nf));
                     nn::LossGrad lg;
                     lg.loss = t * t * a.loss + lambda * b.loss;
                     lg.dlogits.resize(logits.rows(), logits.cols());
                     lg.dlogits << t * t * a.grad, lambda * b.grad;
                     return lg;
                   });
  return out;
}

void reinit_head(StageModel& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0,
                                        1.0 / std::sqrt(static_cast<double>(model.head_weight.cols())));
  for (Eigen::Index i = 0; i < model.head_weight.size(); ++i) model.head_weight.data()[i] = dist(rng);
  model.head_bias.setZero();
}

StageModel ddft(const StageModel& model, const data::LabeledDataset& retain,
                const BaselineConfig& cfg) {
  validate(cfg);
  StageModel out = model;
  reinit_head(out, cfg.seed);
  ce_fine_tune(out, retain, cfg, [&](std::mt19937_64&) { return retain.labels; });
  return out;
}

std::vector<int> relabel(std::span<const int> labels, const std::set<int>& forget,
                         const std::vector<int>& retain, std::mt19937_64& rng) {
  require(!retain.empty(), ErrorKind::InvalidArgument, "relabeling needs a retain class");
  std::uniform_int_distribution<std::size_t> pick(0, retain.size() - 1);
  std::vector<int> out(labels.begin(), labels.end());
  for (int& y : out) {
    if (forget.count(y)) y = retain[pick(rng)];
  }
  return out;
}

StageModel rand_relabel(const StageModel& model, const data::LabeledDataset& data,
                        const data::ForgetSpec& forget, const BaselineConfig& cfg) {
  validate(cfg);
  data::validate(forget, model.class_count);
  std::vector<int> retain;
  for (int c : data::present_classes(data)) {
    if (forget.classes.count(c) == 0) retain.push_back(c);
  }
  require(!retain.empty(), ErrorKind::InvalidArgument, "relabeling needs a retain class");
  StageModel out = model;
  ce_fine_tune(out, data, cfg, [&](std::mt19937_64& rng) {
    return relabel(data.labels, forget.classes, retain, rng);
  });
  return out;
}

std::vector<SweepPoint> bias_sweep(const StageModel& model, int forget_class,
                                   const std::vector<double>& offsets,
                                   const data::LabeledDataset& test) {
  require(forget_class >= 0 && forget_class < model.class_count, ErrorKind::InvalidArgument,
          "forget class out of range");
  const auto split = data::split_retain_forget(test, data::ForgetSpec{{forget_class}});
  std::vector<SweepPoint> out;
  for (double d : offsets) {
    StageModel m = model;
    m.head_bias(forget_class) += d;
    out.push_back({d, metrics::accuracy(m, split.retain), metrics::accuracy(m, split.forget)});
  }
  return out;
}

StageModel run(Method m, const StageModel& model, const data::LabeledDataset& full,
               const data::ForgetSpec& forget, const BaselineConfig& cfg,
               const nn::TrainConfig& retrain_cfg) {
  const auto split = data::split_retain_forget(full, forget);
  switch (m) {
    case Method::Retrain:
      return retrain(model.arch, model.input, model.class_count, split.retain, forget, retrain_cfg);
    case Method::LogitMask: return logit_mask(model, forget);
    case Method::Gau: return gau(model, split.retain, split.forget, cfg);
    case Method::Kdu: return kdu(model, split.retain, split.forget, cfg);
    case Method::Ddft: return ddft(model, split.retain, cfg);
    case Method::RandRelabel: return rand_relabel(model, full, forget, cfg);
  }
  fail(ErrorKind::InvalidArgument, "unknown method");
}

}  // namespace damp::baselines
