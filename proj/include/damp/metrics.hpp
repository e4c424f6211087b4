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

#include <span>
#include <string>
#include <vector>

#include "damp/data.hpp"
#include "damp/model.hpp"
#include "damp/probe.hpp"
#include "damp/train.hpp"

namespace damp::metrics {

using linalg::Matrix;
using linalg::Vector;

/// Top-1 accuracy in percent. Masked classes never win the argmax; ties go to
/// the lowest class index.
double accuracy(const nn::StageModel& model, const data::LabeledDataset& data);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Per-class accuracy in percent for every class present in `data`.
std::vector<std::pair<int, double>> class_accuracies(const nn::StageModel& model,
                                                     const data::LabeledDataset& data);

/// Area under the ROC curve from the Mann-Whitney statistic with midranks.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Probe statistics at one stage, both in percentage points.
struct LayerStats {
  int stage = 0;
  double auc_forget = 0.0;  // held-out AUC of the forget-vs-retain probe
  double acc_retain = 0.0;  // held-out accuracy of a retain-classes-only probe
};

/// Stats for every stage, sharing one pass over each pool.
std::vector<LayerStats> layer_stats(const nn::StageModel& model,
                                    const data::LabeledDataset& forget_pool,
                                    const data::LabeledDataset& retain_pool,
                                    const probe::ProbeConfig& cfg);

/// (AUC_base - AUC_method) - (ACC_base - ACC_method).
double selectivity(const LayerStats& baseline, const LayerStats& method);

/// Representational dissimilarity: 1 - Pearson correlation between class-mean
/// GAP features.
struct Rdm {
  int stage = 0;
  std::vector<int> classes;
  Matrix distance;
};

/// `means` holds one class-mean feature vector per column.
Rdm rdm_from_means(const Matrix& means, std::vector<int> classes, int stage);

/// Class means from the first `samples_per_class` samples of each class
/// (0 uses all of them).
Rdm rdm(const nn::StageModel& model, const data::LabeledDataset& data,
        const std::vector<int>& classes, int stage, std::size_t samples_per_class);

struct RdmDiff {
  Matrix difference;  // this - reference
  double mean_abs = 0.0;
};

RdmDiff diff_to(const Rdm& rdm, const Rdm& reference);

/// Head bias of `model` minus that of `baseline`.
Vector bias_shift(const nn::StageModel& model, const nn::StageModel& baseline);

/// Continual score: R * (1 - NF / 100).
double cus(double retain, double newly_forgotten);

/// One-decimal display rounding used in reports.
double round1(double v);

struct ContinualRound {
  int forgotten_class = -1;
  double retain = 0.0;           // R over classes not yet forgotten
  double newly_forgotten = 0.0;  // NF on this round's class
  double all_forgotten = 0.0;    // AF: mean of per-class accuracies over every forgotten class
  double score = 0.0;            // CUS
};

struct ContinualLog {
  std::vector<ContinualRound> rounds;

  std::vector<int> forgotten() const;
};

/// Scores the model after the round that forgot `cls` and appends the row.
void continual_round(ContinualLog& log, const nn::StageModel& model, int cls,
                     const data::LabeledDataset& test);

/// Accuracy in percent on adversarial versions of `data` built against `model`.
double adversarial_accuracy(const nn::StageModel& model, const data::LabeledDataset& data,
                            const nn::AttackConfig& attack, std::size_t batch_size = 256);

}  // namespace damp::metrics
