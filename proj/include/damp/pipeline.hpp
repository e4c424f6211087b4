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
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "damp/config.hpp"
#include "damp/data.hpp"
#include "damp/metrics.hpp"
#include "damp/model.hpp"

namespace damp::pipeline {

using config::ExperimentConfig;

// CSV headers. Single-class tables follow (R_acc, F_acc); continual tables
// follow (R, NF, AF, CUS).
inline constexpr std::string_view kTableHeader = "seed,method,R_acc,F_acc";
inline constexpr std::string_view kAdversarialColumns = ",FGSM_R_acc,FGSM_F_acc,PGD_R_acc,PGD_F_acc";
inline constexpr std::string_view kContinualHeader = "seed,method,round,class,R,NF,AF,CUS";
inline constexpr std::string_view kSelectivityHeader = "seed,method,stage,auc_forget,acc_retain,selectivity";
inline constexpr std::string_view kBiasShiftHeader = "seed,method,class,shift";
inline constexpr std::string_view kRdmHeader = "seed,method,stage,mean_abs_diff";
inline constexpr std::string_view kSweepHeader = "seed,offset,R_acc,F_acc";
inline constexpr std::string_view kTrainLogHeader = "epoch,loss";

struct Datasets {
  data::LabeledDataset train;
  data::LabeledDataset test;
};

Datasets load_datasets(const ExperimentConfig& cfg, std::uint64_t seed);

std::filesystem::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed);
/// [model] checkpoint when given, else the pretrain output for this seed.
std::filesystem::path baseline_path(const ExperimentConfig& cfg, std::uint64_t seed);

/// Loads the baseline and checks it against [model] expected_fingerprint.
nn::StageModel load_baseline(const ExperimentConfig& cfg, std::uint64_t seed);

struct PretrainResult {
  nn::StageModel model;
  std::vector<double> epoch_loss;
};
PretrainResult pretrain(const ExperimentConfig& cfg, const Datasets& data, std::uint64_t seed);

struct MethodResult {
  std::string tag;
  nn::StageModel model;
  nlohmann::json trace;  // deterministic; no timings
  double seconds = 0.0;
  double surgery_seconds = 0.0;     // damp only
  double statistics_seconds = 0.0;  // damp only
};

/// One unlearning method applied to `base` for `forget`, training-split
/// statistics only.
MethodResult run_method(const std::string& tag, const nn::StageModel& base, const Datasets& data,
                        const data::ForgetSpec& forget, const ExperimentConfig& cfg,
                        std::uint64_t seed);

struct MethodEval {
  std::string tag;
  double retain_acc = 0.0;
  double forget_acc = 0.0;
  std::optional<std::array<double, 4>> adversarial;  // FGSM R/F, PGD R/F
  std::vector<metrics::LayerStats> layers;
  std::vector<double> selectivity;  // per stage
  std::optional<metrics::Rdm> rdm;
  std::optional<double> rdm_diff;  // mean |RDM - RDM_retrain|
  linalg::Vector bias_shift;
};

/// Full metric suite on the test split. `baseline_layers` are the probe stats
/// of the unedited model; `reference` is the retrained RDM, when available.
MethodEval evaluate(const std::string& tag, const nn::StageModel& model,
                    const nn::StageModel& baseline,
                    const std::vector<metrics::LayerStats>& baseline_layers,
                    const data::LabeledDataset& test, const data::ForgetSpec& forget,
                    const ExperimentConfig& cfg, const metrics::Rdm* reference);

std::vector<metrics::LayerStats> probe_stats(const nn::StageModel& model,
                                             const data::LabeledDataset& test,
                                             const data::ForgetSpec& forget,
                                             const ExperimentConfig& cfg, std::uint64_t seed);

/// Sequential rounds on the running model; round k forgets sequence[0..k].
metrics::ContinualLog run_continual(const std::string& method, const nn::StageModel& base,
                                    const Datasets& data, const std::vector<int>& sequence,
                                    const ExperimentConfig& cfg, std::uint64_t seed);

// Subcommands. Each one loops over the configured seeds.
void cmd_pretrain(const ExperimentConfig& cfg);
void cmd_unlearn(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_continual(const ExperimentConfig& cfg);
void cmd_sweep_bias(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg);

/// Dispatch by subcommand name; unknown names are a Config error.
void run_command(std::string_view command, const ExperimentConfig& cfg);

std::string format_fixed(double value, int decimals);

}  // namespace damp::pipeline
