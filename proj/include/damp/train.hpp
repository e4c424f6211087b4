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
#include <functional>
#include <span>
#include <vector>

#include "damp/model.hpp"

namespace damp::data {
struct LabeledDataset;
}

namespace damp::nn {

struct StageCache {
  Matrix op_input;     // im2col patches or flattened input
  int in_samples = 0, in_height = 1, in_width = 1;
  Matrix normalized;   // x-hat, when the stage normalizes
  Vector inv_std;
  Vector batch_mean;
  Vector batch_var;    // biased
  Matrix pre_activation;
  std::vector<int> pool_index;  // argmax column for every pooled output column
  int act_height = 1, act_width = 1;  // spatial size before pooling
};

struct ForwardCache {
  Mode mode = Mode::Inference;
  std::vector<StageCache> stages;
  Matrix pooled;  // GAP of the last stage
  int last_height = 1, last_width = 1;
};

struct ForwardResult {
  Matrix logits;  // raw, no output mask
  ForwardCache cache;
};

ForwardResult forward_with_cache(const StageModel& model, const FeatureMap& batch, Mode mode);

/// Reverse-mode pass. Returns parameter gradients in a model-shaped container;
/// writes the input gradient when `input_grad` is non-null.
StageModel backward(const StageModel& model, const ForwardCache& cache, const Matrix& dlogits,
                    FeatureMap* input_grad = nullptr);

/// Number of backward passes run in this process; surgery code is checked
/// against it.
std::uint64_t backward_pass_count();

/// Moves running statistics towards the batch statistics (PyTorch convention:
/// momentum 0.1, unbiased variance).
void update_running_stats(StageModel& model, const ForwardCache& cache, double momentum = 0.1);

struct LossGrad {
  double loss = 0.0;
  Matrix dlogits;
};

/// Mean cross-entropy over the batch; masked classes are excluded from the
/// softmax. `scale` multiplies both loss and gradient.
LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels, double scale = 1.0,
                       std::span<const int> masked = {});

enum class OptimizerKind { SgdMomentum, Adam };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double learning_rate = 0.01;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 128;
  bool cosine_schedule = false;
  std::uint64_t seed = 42;
};

void validate(const TrainConfig& cfg);

/// Per-parameter optimizer state for one model layout.
class Optimizer {
 public:
  Optimizer(const StageModel& model, const TrainConfig& cfg);
  void step(StageModel& model, const StageModel& grads, double lr);

 private:
  TrainConfig cfg_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  long step_count_ = 0;
};

double scheduled_lr(const TrainConfig& cfg, int epoch);

struct TrainResult {
  std::vector<double> epoch_loss;
};

/// Cross-entropy training. Deterministic given cfg.seed.
TrainResult train(StageModel& model, const data::LabeledDataset& data, const TrainConfig& cfg);

/// Mean cross-entropy in inference mode.
double evaluate_loss(const StageModel& model, const data::LabeledDataset& data);

/// Compares reverse-mode gradients of the training-mode cross-entropy with
/// central differences on up to `max_params` randomly chosen parameters.
double gradient_check(const StageModel& model, const FeatureMap& batch,
                      std::span<const int> labels, std::uint64_t seed = 7,
                      std::size_t max_params = 64, double h = 1e-4);

enum class Attack { Fgsm, Pgd };

struct AttackConfig {
  Attack attack = Attack::Fgsm;
  double epsilon = 0.1;
  int steps = 10;
  double step_size = 0.025;  // PGD default is epsilon / 4
  double lower = 0.0;        // valid input range
  double upper = 1.0;
};

/// Signed-gradient attack on the inference-mode cross-entropy.
FeatureMap adversarial_batch(const StageModel& model, const FeatureMap& batch,
                             std::span<const int> labels, const AttackConfig& cfg);

}  // namespace damp::nn
