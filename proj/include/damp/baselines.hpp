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

#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "damp/data.hpp"
#include "damp/model.hpp"
#include "damp/train.hpp"

namespace damp::baselines {

using linalg::Matrix;

enum class Method { Retrain, LogitMask, Gau, Kdu, Ddft, RandRelabel };

std::string_view method_tag(Method m);
/// Tags: retrain, lm, gau, kdu, ddft, randrelabel.
Method method_from_tag(std::string_view tag);

struct BaselineConfig {
  Method method = Method::Gau;
  int epochs = 10;
  double learning_rate = 1e-4;
  double lambda_gau = 0.1;
  double lambda_kdu = 0.5;
  double temperature = 4.0;
  int batch_size = 128;
  std::uint64_t seed = 42;
};

/// Defaults per method: Adam at 1e-4 for 10 epochs, 5e-4 for ddft,
/// no epochs for lm. Retrain takes its schedule from the pretraining config.
BaselineConfig default_config(Method m);

void validate(const BaselineConfig& cfg);

/// Fresh seeded model trained only on retain classes. The head is trained over
/// the retain classes alone and then embedded in the full label space; the
/// forget rows are zero and masked at evaluation.
nn::StageModel retrain(const nn::ArchSpec& arch, const nn::InputShape& input, int class_count,
                       const data::LabeledDataset& retain, const data::ForgetSpec& forget,
                       const nn::TrainConfig& cfg);

/// Copy of `model` whose forget logits are -infinity; weights untouched.
nn::StageModel logit_mask(const nn::StageModel& model, const data::ForgetSpec& forget);

/// Fine-tunes on CE(retain) - lambda * CE(forget).
nn::StageModel gau(const nn::StageModel& model, const data::LabeledDataset& retain,
                   const data::LabeledDataset& forget, const BaselineConfig& cfg);

/// Forward KL divergence KL(p || q) between softmax(a / T) and softmax(b / T)
/// per column, averaged over columns, and its gradient with respect to `a`.
struct KlGrad {
  double loss = 0.0;
  Matrix grad;
};
KlGrad kl_to_reference(const Matrix& student_logits, const Matrix& reference_logits, double t);
KlGrad kl_to_uniform(const Matrix& student_logits);

/// Student minimizes T^2 KL(student || teacher) at temperature T on retain
/// batches plus lambda KL(student || uniform) on forget batches.
nn::StageModel kdu(const nn::StageModel& model, const data::LabeledDataset& retain,
                   const data::LabeledDataset& forget, const BaselineConfig& cfg);

/// Reseeds the head the way build_model does.
void reinit_head(nn::StageModel& model, std::uint64_t seed);

/// Head reinitialization followed by full fine-tuning on retain data.
nn::StageModel ddft(const nn::StageModel& model, const data::LabeledDataset& retain,
                    const BaselineConfig& cfg);

/// Replaces every forget label by an independent uniform draw from `retain`.
std::vector<int> relabel(std::span<const int> labels, const std::set<int>& forget,
                         const std::vector<int>& retain, std::mt19937_64& rng);

/// Fine-tunes on the full data with forget labels redrawn every epoch.
nn::StageModel rand_relabel(const nn::StageModel& model, const data::LabeledDataset& data,
                            const data::ForgetSpec& forget, const BaselineConfig& cfg);

struct SweepPoint {
  double offset = 0.0;
  double retain_accuracy = 0.0;
  double forget_accuracy = 0.0;
};

/// Evaluates copies with b_f shifted by each offset, in the given order.
std::vector<SweepPoint> bias_sweep(const nn::StageModel& model, int forget_class,
                                   const std::vector<double>& offsets,
                                   const data::LabeledDataset& test);

/// Dispatch for the weight-changing methods; `full` is the training split.
nn::StageModel run(Method m, const nn::StageModel& model, const data::LabeledDataset& full,
                   const data::ForgetSpec& forget, const BaselineConfig& cfg,
                   const nn::TrainConfig& retrain_cfg);

}  // namespace damp::baselines
