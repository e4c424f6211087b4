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

#include "damp/linalg.hpp"

namespace damp::probe {

using linalg::Matrix;
using linalg::Vector;

struct ProbeConfig {
  double train_fraction = 0.8;
  double inverse_l2 = 1.0;  // C: the data term is scaled by this, the penalty is 0.5 |w|^2
  int max_iter = 1000;
  double gradient_tol = 1e-6;
  std::uint64_t seed = 42;
};

void validate(const ProbeConfig& cfg);

/// Objective value and gradient at x.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with a backtracking Armijo line search.
LbfgsResult minimize_lbfgs(const Objective& f, Vector x0, int max_iter, double gradient_tol,
                           int memory = 10);

/// Zero-mean / unit-variance scaling fitted on one set of columns. Constant
/// features keep a unit scale.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& features);
  Matrix apply(const Matrix& features) const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded per-label shuffle followed by the train/test cut inside every label
/// group. Each group keeps at least one sample on both sides when it has two.
SplitIndices stratified_split(std::span<const int> labels, double train_fraction,
                              std::uint64_t seed);

/// Weights n / (k * n_label) over the given labels.
std::vector<double> balanced_weights(std::span<const int> labels, int label_count);

struct BinaryProbeResult {
  double accuracy = 0.0;         // held-out, in [0, 1]
  std::vector<double> scores;    // held-out decision values
  std::vector<int> test_labels;  // held-out 0/1 labels
  bool converged = false;
};

/// Balanced L2 logistic regression on standardized features (columns are
/// samples) scored on a stratified held-out split.
BinaryProbeResult binary_probe(const Matrix& features, std::span<const int> labels,
                               const ProbeConfig& cfg);

/// Multinomial counterpart of binary_probe; labels in [0, label_count).
/// Returns held-out accuracy in [0, 1].
double multiclass_probe_accuracy(const Matrix& features, std::span<const int> labels,
                                 int label_count, const ProbeConfig& cfg);

}  // namespace damp::probe
