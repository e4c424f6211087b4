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

#include "damp/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <string>

#include "damp/error.hpp"
#include "damp/train.hpp"

namespace damp::nn {

ArchSpec arch_from_name(std::string_view name) {
  ArchSpec a;
  a.tag = std::string(name);
  if (name == "cnn5-mini") {
    a.kind = ArchKind::Cnn5Mini;
    a.widths = {8, 16, 32, 32, 64};
  } else if (name == "cnn5-mini-tiny") {
    a.kind = ArchKind::Cnn5Mini;
    a.widths = {2, 3, 4, 4, 3};
  } else if (name == "mlp5") {
    a.kind = ArchKind::Mlp5;
    a.widths = {256, 256, 256, 256, 256};
  } else if (name == "mlp5-tiny") {
    a.kind = ArchKind::Mlp5;
    a.widths = {6, 6, 5, 5, 4};
  } else {
    fail(ErrorKind::InvalidArgument, "unknown architecture '" + std::string(name) + "'");
  }
  return a;
}

std::size_t StageModel::parameter_count() const {
  std::size_t n = 0;
  for_each_parameter(*this, [&](const std::string&, const double*, std::size_t len) { n += len; });
  return n;
}

namespace {

void fill_normal(Matrix& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace

StageModel build_model(const ArchSpec& arch, const InputShape& input, int class_count,
                       std::uint64_t seed) {
  require(class_count >= 2, ErrorKind::InvalidArgument, "class_count must be at least 2");
  require(input.channels >= 1 && input.height >= 1 && input.width >= 1,
          ErrorKind::InvalidArgument, "input shape must be positive");
  for (int w : arch.widths) {
    require(w >= 1, ErrorKind::InvalidArgument, "stage widths must be positive");
  }

  StageModel m;
  m.arch = arch;
  m.input = input;
  m.class_count = class_count;
  std::mt19937_64 rng(seed);

  int channels = input.channels;
  int h = input.height;
  int w = input.width;
  for (int i = 0; i < kStageCount; ++i) {
    Stage s;
    s.out_channels = arch.widths[static_cast<std::size_t>(i)];
    s.in_height = h;
    s.in_width = w;
    if (arch.kind == ArchKind::Cnn5Mini) {
      s.op = OpKind::Conv;
      s.in_channels = channels;
      s.kernel = 3;
      s.padding = 1;
      s.norm = true;
      s.pool = i < 3;
      s.out_height = s.pool ? h / 2 : h;
      s.out_width = s.pool ? w / 2 : w;
      require(s.out_height >= 1 && s.out_width >= 1, ErrorKind::InvalidArgument,
              "input too small for three pooling stages");
    } else {
      s.op = OpKind::Linear;
      s.in_channels = channels * h * w;
      s.kernel = 1;
      s.padding = 0;
      s.out_height = 1;
      s.out_width = 1;
    }
    const int fan_in = s.in_channels * s.kernel * s.kernel;
    s.weight.resize(s.out_channels, fan_in);
    fill_normal(s.weight, std::sqrt(2.0 / fan_in), rng);
    s.bias = Vector::Zero(s.out_channels);
    if (s.norm) {
      s.norm_scale = Vector::Ones(s.out_channels);
      s.norm_shift = Vector::Zero(s.out_channels);
      s.running_mean = Vector::Zero(s.out_channels);
      s.running_var = Vector::Ones(s.out_channels);
    }
    channels = s.out_channels;
    h = s.out_height;
    w = s.out_width;
    m.stages.push_back(std::move(s));
  }
  m.head_weight.resize(class_count, channels);
  fill_normal(m.head_weight, 1.0 / std::sqrt(static_cast<double>(channels)), rng);
  m.head_bias = Vector::Zero(class_count);
  return m;
}

StageModel zeros_like(const StageModel& model) {
  StageModel g = model;
  for (auto& s : g.stages) {
    s.weight.setZero();
    s.bias.setZero();
    if (s.norm) {
      s.norm_scale.setZero();
      s.norm_shift.setZero();
      s.running_mean.setZero();
      s.running_var.setZero();
    }
  }
  g.head_weight.setZero();
  g.head_bias.setZero();
  return g;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void byte(std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) byte(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void values(const double* p, std::size_t n) {
    u64(n);
    for (std::size_t i = 0; i < n; ++i) u64(std::bit_cast<std::uint64_t>(p[i]));
  }
};

}  // namespace

std::string fingerprint(const StageModel& model) {
  Fnv1a f;
  f.u64(static_cast<std::uint64_t>(model.class_count));
  for_each_parameter(model, [&](const std::string&, const double* p, std::size_t n) {
    f.values(p, n);
  });
  for (const auto& s : model.stages) {
    if (!s.norm) continue;
    f.values(s.running_mean.data(), static_cast<std::size_t>(s.running_mean.size()));
    f.values(s.running_var.data(), static_cast<std::size_t>(s.running_var.size()));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f.h));
  return buf;
}

Matrix gap(const FeatureMap& activation) {
  const int loc = activation.locations();
  require(loc >= 1, ErrorKind::InvalidArgument, "GAP of an activation without locations");
  Matrix out(activation.channels(), activation.samples);
  for (int s = 0; s < activation.samples; ++s) {
    out.col(s) = activation.data.middleCols(static_cast<Eigen::Index>(s) * loc, loc)
                     .rowwise()
                     .sum() /
                 static_cast<double>(loc);
  }
  return out;
}

Matrix im2col(const FeatureMap& input, int kernel, int padding) {
  const int c = input.channels();
  const int h = input.height;
  const int w = input.width;
  const int oh = h + 2 * padding - kernel + 1;
  const int ow = w + 2 * padding - kernel + 1;
  require(oh >= 1 && ow >= 1, ErrorKind::InvalidArgument, "kernel larger than padded input");
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(c) * kernel * kernel,
                             static_cast<Eigen::Index>(input.samples) * oh * ow);
  for (int s = 0; s < input.samples; ++s) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const Eigen::Index col = (static_cast<Eigen::Index>(s) * oh + y) * ow + x;
        for (int ch = 0; ch < c; ++ch) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = y + ky - padding;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = x + kx - padding;
              if (ix < 0 || ix >= w) continue;
              cols((ch * kernel + ky) * kernel + kx, col) =
                  input.data(ch, (static_cast<Eigen::Index>(s) * h + iy) * w + ix);
            }
          }
        }
      }
    }
  }
  return cols;
}

FeatureMap col2im(const Matrix& cols, int channels, int samples, int height, int width,
                  int kernel, int padding) {
  const int oh = height + 2 * padding - kernel + 1;
  const int ow = width + 2 * padding - kernel + 1;
  FeatureMap out;
  out.samples = samples;
  out.height = height;
  out.width = width;
  out.data = Matrix::Zero(channels, static_cast<Eigen::Index>(samples) * height * width);
  for (int s = 0; s < samples; ++s) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const Eigen::Index col = (static_cast<Eigen::Index>(s) * oh + y) * ow + x;
        for (int ch = 0; ch < channels; ++ch) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = y + ky - padding;
            if (iy < 0 || iy >= height) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = x + kx - padding;
              if (ix < 0 || ix >= width) continue;
              out.data(ch, (static_cast<Eigen::Index>(s) * height + iy) * width + ix) +=
                  cols((ch * kernel + ky) * kernel + kx, col);
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

Matrix flatten_samples(const FeatureMap& in) {
  const int loc = in.locations();
  if (loc == 1) return in.data;
  Matrix x(static_cast<Eigen::Index>(in.channels()) * loc, in.samples);
  for (int s = 0; s < in.samples; ++s) {
    for (int c = 0; c < in.channels(); ++c) {
      for (int p = 0; p < loc; ++p) {
        x(static_cast<Eigen::Index>(c) * loc + p, s) =
            in.data(c, static_cast<Eigen::Index>(s) * loc + p);
      }
    }
  }
  return x;
}

}  // namespace

// Shared by inference and training forward passes.
static FeatureMap stage_forward(const Stage& st, const FeatureMap& in, Mode mode, StageCache* cache) {
  FeatureMap out;
  out.samples = in.samples;
  Matrix y;
  int h = 1;
  int w = 1;
  if (st.op == OpKind::Conv) {
    require(in.channels() == st.in_channels && in.height == st.in_height &&
                in.width == st.in_width,
            ErrorKind::InvalidArgument, "convolution input shape mismatch");
    Matrix cols = im2col(in, st.kernel, st.padding);
    y = st.weight * cols;
    y.colwise() += st.bias;
    h = in.height + 2 * st.padding - st.kernel + 1;
    w = in.width + 2 * st.padding - st.kernel + 1;
    if (cache) cache->op_input = std::move(cols);
  } else {
    Matrix x = flatten_samples(in);
    require(x.rows() == st.in_channels, ErrorKind::InvalidArgument,
            "linear stage input length mismatch");
    y = st.weight * x;
    y.colwise() += st.bias;
    if (cache) cache->op_input = std::move(x);
  }
  if (cache) {
    cache->in_samples = in.samples;
    cache->in_height = in.height;
    cache->in_width = in.width;
  }

  if (st.norm) {
    Vector mean;
    Vector var;
    if (mode == Mode::Training) {
      const double count = static_cast<double>(y.cols());
      mean = y.rowwise().sum() / count;
      var = (y.colwise() - mean).array().square().rowwise().sum() / count;
    } else {
      mean = st.running_mean;
      var = st.running_var;
    }
    const Vector inv_std = (var.array() + kNormEps).rsqrt();
    Matrix xhat = (y.colwise() - mean).array().colwise() * inv_std.array();
    y = (xhat.array().colwise() * st.norm_scale.array()).colwise() + st.norm_shift.array();
    if (cache) {
      cache->normalized = std::move(xhat);
      cache->inv_std = inv_std;
      cache->batch_mean = mean;
      cache->batch_var = var;
    }
  }

  if (cache) cache->pre_activation = y;
  y = y.cwiseMax(0.0);
  if (cache) {
    cache->act_height = h;
    cache->act_width = w;
  }

  if (st.pool) {
    const int oh = h / 2;
    const int ow = w / 2;
    const Eigen::Index c = y.rows();
    Matrix pooled(c, static_cast<Eigen::Index>(in.samples) * oh * ow);
    std::vector<int> index;
    if (cache) index.resize(static_cast<std::size_t>(pooled.size()));
    for (int s = 0; s < in.samples; ++s) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index oc = (static_cast<Eigen::Index>(s) * oh + oy) * ow + ox;
          for (Eigen::Index ch = 0; ch < c; ++ch) {
            double best = -std::numeric_limits<double>::infinity();
            Eigen::Index arg = 0;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const Eigen::Index ic =
                    (static_cast<Eigen::Index>(s) * h + 2 * oy + dy) * w + 2 * ox + dx;
                if (y(ch, ic) > best) {
                  best = y(ch, ic);
                  arg = ic;
                }
              }
            }
            pooled(ch, oc) = best;
            if (cache) index[static_cast<std::size_t>(ch * pooled.cols() + oc)] =
                static_cast<int>(arg);
          }
        }
      }
    }
    if (cache) cache->pool_index = std::move(index);
    y = std::move(pooled);
    h = oh;
    w = ow;
  }

  out.data = std::move(y);
  out.height = h;
  out.width = w;
  return out;
}

ForwardResult forward_with_cache(const StageModel& model, const FeatureMap& batch, Mode mode) {
  require(batch.channels() == model.input.channels && batch.height == model.input.height &&
              batch.width == model.input.width,
          ErrorKind::InvalidArgument, "batch shape does not match the model input");
  ForwardResult r;
  r.cache.mode = mode;
  r.cache.stages.resize(model.stages.size());
  FeatureMap a = batch;
  for (std::size_t i = 0; i < model.stages.size(); ++i) {
    a = stage_forward(model.stages[i], a, mode, &r.cache.stages[i]);
  }
  r.cache.pooled = gap(a);
  r.cache.last_height = a.height;
  r.cache.last_width = a.width;
  r.logits = model.head_weight * r.cache.pooled;
  r.logits.colwise() += model.head_bias;
  return r;
}

ActivationTrace forward(const StageModel& model, const FeatureMap& batch, bool capture) {
  require(batch.channels() == model.input.channels && batch.height == model.input.height &&
              batch.width == model.input.width,
          ErrorKind::InvalidArgument, "batch shape does not match the model input");
  ActivationTrace t;
  FeatureMap a = batch;
  for (const auto& st : model.stages) {
    a = stage_forward(st, a, Mode::Inference, nullptr);
    if (capture) {
      t.pooled.push_back(gap(a));
      t.stages.push_back(a);
    }
  }
  const Matrix pooled = capture ? t.pooled.back() : gap(a);
  t.logits = model.head_weight * pooled;
  t.logits.colwise() += model.head_bias;
  apply_output_mask(model, t.logits);
  return t;
}

void apply_output_mask(const StageModel& model, Matrix& logits) {
  for (int c : model.output_mask) {
    if (c >= 0 && c < logits.rows()) {
      logits.row(c).setConstant(-std::numeric_limits<double>::infinity());
    }
  }
}

std::vector<int> predict(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.rows(); ++i) {
      if (logits(i, j) > logits(best, j)) best = i;
    }
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

int edit_dim(const StageModel& model, int stage) {
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  return static_cast<int>(next_operator_weight(model, stage).cols());
}

const Matrix& next_operator_weight(const StageModel& model, int stage) {
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  if (stage == model.stage_count()) return model.head_weight;
  return model.stages[static_cast<std::size_t>(stage)].weight;
}

Matrix& next_operator_weight(StageModel& model, int stage) {
  return const_cast<Matrix&>(next_operator_weight(static_cast<const StageModel&>(model), stage));
}

EditSpace edit_space_from_activation(const StageModel& model, const FeatureMap& activation,
                                     int stage) {
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  EditSpace e;
  if (stage == model.stage_count()) {
    e.vectors = gap(activation);
  } else {
    const Stage& next = model.stages[static_cast<std::size_t>(stage)];
    if (next.op == OpKind::Conv) {
      e.vectors = im2col(activation, next.kernel, next.padding);
    } else {
      e.vectors = flatten_samples(activation);
    }
  }
  e.locations = static_cast<std::size_t>(e.vectors.cols());
  return e;
}

EditSpace edit_space_vectors(const StageModel& model, const FeatureMap& batch, int stage) {
  require(stage >= 1 && stage <= model.stage_count(), ErrorKind::InvalidArgument,
          "stage index out of range");
  FeatureMap a = batch;
  for (int i = 0; i < stage; ++i) {
    a = stage_forward(model.stages[static_cast<std::size_t>(i)], a, Mode::Inference, nullptr);
  }
  return edit_space_from_activation(model, a, stage);
}

}  // namespace damp::nn
