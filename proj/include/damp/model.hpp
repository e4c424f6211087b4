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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "damp/linalg.hpp"

namespace damp::nn {

using linalg::Matrix;
using linalg::Vector;

inline constexpr int kStageCount = 5;
inline constexpr double kNormEps = 1e-5;

enum class ArchKind { Cnn5Mini, Mlp5 };
enum class OpKind { Conv, Linear };
enum class Activation { Relu };

struct InputShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  int size() const { return channels * height * width; }
  bool operator==(const InputShape&) const = default;
};

struct ArchSpec {
  ArchKind kind = ArchKind::Mlp5;
  std::array<int, kStageCount> widths{};
  std::string tag;  // name passed to arch_from_name, e.g. "cnn5-mini"

  bool operator==(const ArchSpec&) const = default;
};

/// Known tags: cnn5-mini, cnn5-mini-tiny, mlp5, mlp5-tiny.
ArchSpec arch_from_name(std::string_view name);

/// Activation batch in channel-major layout: one row per channel, one column
/// per (sample, y, x) location, sample-major then row-major in space.
struct FeatureMap {
  Matrix data;
  int samples = 0;
  int height = 1;
  int width = 1;

  int channels() const { return static_cast<int>(data.rows()); }
  int locations() const { return height * width; }
};

struct Stage {
  OpKind op = OpKind::Linear;
  int in_channels = 0;   // for linear ops: flattened input length
  int out_channels = 0;
  int kernel = 1;
  int padding = 0;
  // Flattened matrix view of the operator: out x (in * kernel * kernel), the
  // column index being (c * kernel + ky) * kernel + kx for convolutions.
  Matrix weight;
  Vector bias;

  bool norm = false;
  Vector norm_scale;
  Vector norm_shift;
  Vector running_mean;
  Vector running_var;

  bool pool = false;
  Activation activation = Activation::Relu;

  // Spatial extent of the stage input and of its (pooled) output.
  int in_height = 1, in_width = 1;
  int out_height = 1, out_width = 1;
};

/// Five feature stages followed by GAP and a linear classifier head.
struct StageModel {
  ArchSpec arch;
  InputShape input;
  int class_count = 0;
  std::vector<Stage> stages;
  Matrix head_weight;  // class_count x stage-5 channels
  Vector head_bias;
  // Classes whose logits are forced to -infinity at evaluation time.
  std::vector<int> output_mask;

  int stage_count() const { return static_cast<int>(stages.size()); }
  std::size_t parameter_count() const;
};

StageModel build_model(const ArchSpec& arch, const InputShape& input, int class_count,
                       std::uint64_t seed);

/// Copy of `model` with every parameter and buffer zeroed; used as a gradient
/// container that mirrors the parameter layout.
StageModel zeros_like(const StageModel& model);

/// Visits trainable parameters in a fixed order: name, data pointer, length.
template <class Model, class F>
void for_each_parameter(Model& model, F&& f) {
  for (std::size_t i = 0; i < model.stages.size(); ++i) {
    auto& s = model.stages[i];
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    f(p + "weight", s.weight.data(), static_cast<std::size_t>(s.weight.size()));
    f(p + "bias", s.bias.data(), static_cast<std::size_t>(s.bias.size()));
    if (s.norm) {
      f(p + "norm.scale", s.norm_scale.data(), static_cast<std::size_t>(s.norm_scale.size()));
      f(p + "norm.shift", s.norm_shift.data(), static_cast<std::size_t>(s.norm_shift.size()));
    }
  }
  f(std::string("head.weight"), model.head_weight.data(),
    static_cast<std::size_t>(model.head_weight.size()));
  f(std::string("head.bias"), model.head_bias.data(),
    static_cast<std::size_t>(model.head_bias.size()));
}

/// Hex digest over every parameter and normalization buffer.
std::string fingerprint(const StageModel& model);

enum class Mode { Inference, Training };

struct ActivationTrace {
  std::vector<FeatureMap> stages;  // a^l, empty unless captured
  std::vector<Matrix> pooled;      // h^l, channels x samples, empty unless captured
  Matrix logits;                   // class_count x samples, mask applied
};

/// Inference-mode forward pass. Normalization uses running statistics, so
/// per-sample outputs do not depend on batch composition.
ActivationTrace forward(const StageModel& model, const FeatureMap& batch, bool capture);

/// Channel-wise spatial mean; result is channels x samples.
Matrix gap(const FeatureMap& activation);

/// Convolution patches: (channels * kernel * kernel) x (samples * h * w).
Matrix im2col(const FeatureMap& input, int kernel, int padding);
FeatureMap col2im(const Matrix& cols, int channels, int samples, int height, int width,
                  int kernel, int padding);

struct EditSpace {
  Matrix vectors;            // edit_dim x locations, one column per z vector
  std::size_t locations = 0; // samples x spatial positions
};

/// Input vectors of the operator that follows stage `stage` (1-based): unfolded
/// patches when it is a convolution, GAP features when it is the head.
EditSpace edit_space_vectors(const StageModel& model, const FeatureMap& batch, int stage);

/// Same as edit_space_vectors but from an already captured stage activation.
EditSpace edit_space_from_activation(const StageModel& model, const FeatureMap& activation,
                                     int stage);

/// Input dimension of the operator that follows `stage`.
int edit_dim(const StageModel& model, int stage);

/// Matrix view of the weight of the operator that follows `stage`.
Matrix& next_operator_weight(StageModel& model, int stage);
const Matrix& next_operator_weight(const StageModel& model, int stage);

/// Argmax with ties broken by the lowest class index.
std::vector<int> predict(const Matrix& logits);

void apply_output_mask(const StageModel& model, Matrix& logits);

}  // namespace damp::nn
