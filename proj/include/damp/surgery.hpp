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
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "damp/data.hpp"
#include "damp/model.hpp"
#include "damp/probe.hpp"

namespace damp::surgery {

using linalg::Matrix;
using linalg::Vector;

// ---------------------------------------------------------------------------
// Prototypes

struct Prototype {
  Vector mean;             // edit-space mean
  std::size_t count = 0;   // samples x locations that went into it
};

/// Class means in the edit space of every requested stage, all taken from one
/// (unedited) model whose fingerprint is recorded.
struct PrototypeTable {
  std::map<std::pair<int, int>, Prototype> entries;  // (class, stage)
  std::string model_fingerprint;

  bool has(int cls, int stage) const { return entries.count({cls, stage}) > 0; }
  const Prototype& at(int cls, int stage) const;
};

/// Streaming accumulation: sums and location counts per (class, stage) over
/// minibatches, divided once at the end. `max_per_class` = 0 uses every sample.
PrototypeTable compute_prototypes(const nn::StageModel& model, const data::LabeledDataset& data,
                                  const std::set<int>& classes, const std::vector<int>& stages,
                                  std::size_t max_per_class = 0, std::size_t batch_size = 128);

// ---------------------------------------------------------------------------
// Forget directions and basis

struct ResidualRecord {
  int cls = -1;
  double norm = 0.0;
  bool skipped = false;
  Vector residual;   // mu_f - R R^+ mu_f
  Vector direction;  // residual / norm, empty when skipped
};

/// Retain-span residual of every forget prototype at `stage`. Residuals with
/// norm below `tol` are recorded as skipped.
std::vector<ResidualRecord> forget_directions(const PrototypeTable& table,
                                              const std::set<int>& retain,
                                              const std::set<int>& forget, int stage,
                                              double tol = 1e-8);

struct StageBasis {
  int stage = 0;
  int dim = 0;
  Matrix basis;  // dim x rank, orthonormal columns; rank may be 0
  std::vector<ResidualRecord> residuals;

  int rank() const { return static_cast<int>(basis.cols()); }
};

/// Orthonormal basis spanning the unskipped directions (rank 0 when none).
StageBasis build_basis(int stage, int dim, std::vector<ResidualRecord> directions,
                       double tol = linalg::kDefaultRankTol);

struct ForgetBasis {
  std::vector<StageBasis> stages;  // ordered by stage
  std::string model_fingerprint;

  const StageBasis* find(int stage) const;
};

// ---------------------------------------------------------------------------
// Layer coefficients

struct LayerCoefficient {
  int stage = 0;
  double probe_accuracy = 0.0;
  double alpha_probe = 0.0;  // clip(2a - 1, 0, 1)
  double alpha_depth = 0.0;  // stage / L
  double alpha = 0.0;        // alpha_probe * alpha_depth
  double applied_alpha = 0.0;  // alpha + boost
};

LayerCoefficient layer_alpha(double probe_accuracy, int stage, int stage_count, double boost = 0.0);

/// Minimum samples per pool for a separability probe.
inline constexpr std::size_t kMinProbePool = 5;

/// Held-out accuracy of a forget-vs-retain logistic probe on the GAP summary
/// of stage `stage`.
double probe_separability(const nn::StageModel& model, int stage,
                          const data::LabeledDataset& forget_pool,
                          const data::LabeledDataset& retain_pool,
                          const probe::ProbeConfig& cfg);

/// GAP summaries h^l for every stage: one channels x samples matrix per stage.
std::vector<Matrix> pooled_features(const nn::StageModel& model, const data::LabeledDataset& data,
                                    std::size_t batch_size = 256);

// ---------------------------------------------------------------------------
// Surgery

struct StageEdit {
  int stage = 0;
  double alpha = 0.0;
  int rank = 0;
  bool no_op = false;
  double weight_norm_before = 0.0;
  double weight_norm_after = 0.0;
  double frobenius_delta = 0.0;
};

struct SurgeryReport {
  std::vector<StageEdit> stages;  // in application order: L down to 1
  std::uint64_t gradient_passes = 0;
};

enum class FingerprintCheck { Enforce, Skip };

/// W <- W (I - alpha Q Q^T) on the operator after every stage with rank > 0,
/// from the deepest stage to the shallowest. Biases are never written.
/// With FingerprintCheck::Enforce the model must be the one the basis was
/// computed from.
SurgeryReport apply_surgery(nn::StageModel& model, const ForgetBasis& basis,
                            const std::vector<LayerCoefficient>& coefficients,
                            FingerprintCheck check = FingerprintCheck::Enforce);

/// Single-operator form of the update above.
void project_out(Matrix& weight, const Matrix& basis, double alpha);

// ---------------------------------------------------------------------------
// End to end

struct UnlearnConfig {
  data::ForgetSpec forget;
  double residual_tol = 1e-8;
  probe::ProbeConfig probe;
  double alpha_boost = 0.0;
  std::size_t max_per_class = 0;
};

void validate(const UnlearnConfig& cfg);

struct DampTrace {
  std::string model_fingerprint;
  std::string edited_fingerprint;
  std::vector<int> forget_classes;
  std::vector<int> retain_classes;
  UnlearnConfig config;
  std::map<int, std::size_t> samples_per_class;
  std::vector<int> edit_dims;  // per stage
  std::vector<LayerCoefficient> coefficients;  // per stage, shallow to deep
  ForgetBasis basis;
  SurgeryReport surgery;
  double surgery_seconds = 0.0;
  double statistics_seconds = 0.0;
};

struct UnlearnResult {
  nn::StageModel model;
  DampTrace trace;
};

/// Prototypes, directions, basis, probes, coefficients and the projection
/// update, all statistics from the unedited model and the training split.
UnlearnResult unlearn(const nn::StageModel& model, const data::LabeledDataset& train,
                      const UnlearnConfig& cfg);

/// Deterministic payload (no timings).
nlohmann::json to_json(const DampTrace& trace);

}  // namespace damp::surgery
