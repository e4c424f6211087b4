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
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "damp/data.hpp"
#include "damp/linalg.hpp"
#include "damp/model.hpp"
#include "damp/train.hpp"

namespace damp::testing {

inline linalg::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                    double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  linalg::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

inline data::LabeledDataset blobs(int classes, int per_class, nn::InputShape shape,
                                  std::uint64_t seed, data::Split split = data::Split::Train,
                                  double separation = 40.0) {
  data::BlobConfig cfg;
  cfg.class_count = classes;
  cfg.per_class = per_class;
  cfg.shape = shape;
  cfg.separation = separation;
  cfg.seed = seed;
  return data::synth_blobs(cfg, split);
}

// Small mlp5 fitted to separable vector blobs; fast enough for unit tests.
inline nn::StageModel trained_mlp(const data::LabeledDataset& train, std::uint64_t seed,
                                  int epochs = 15, const char* arch = "mlp5") {
  auto m = nn::build_model(nn::arch_from_name(arch), train.shape, train.class_count, seed);
  nn::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.seed = seed;
  nn::train(m, train, cfg);
  return m;
}

// Fresh per-process scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("damp-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace damp::testing
