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
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "damp/model.hpp"

namespace damp::data {

enum class Split { Train, Test };

/// Uniformly shaped inputs in [0, 1] with integer labels in [0, class_count).
struct LabeledDataset {
  nn::InputShape shape;
  std::vector<float> inputs;  // size() * shape.size(), sample-major, CHW inside
  std::vector<int> labels;
  int class_count = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const float> sample(std::size_t i) const {
    const std::size_t n = static_cast<std::size_t>(shape.size());
    return {inputs.data() + i * n, n};
  }
  void push_back(std::span<const float> x, int label);
};

/// Validates label range, input range and buffer sizes.
void validate(const LabeledDataset& data);

struct ForgetSpec {
  std::set<int> classes;
};

void validate(const ForgetSpec& spec, int class_count);

/// Reads an IDX image/label pair (magic 0x00000803 / 0x00000801). Pixel bytes
/// are divided by `scale`.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int class_count = 10, double scale = 255.0, Split split = Split::Train);

struct BlobConfig {
  int class_count = 10;
  int per_class = 100;
  nn::InputShape shape{64, 1, 1};
  double separation = 10.0;
  double noise = 1.0;  // per-coordinate standard deviation
  std::uint64_t seed = 1;
};

/// Seeded Gaussian clusters. Class means are drawn from cfg.seed with pairwise
/// distance >= separation, then every coordinate is mapped into [0, 1] by an
/// affine map fixed by the generator parameters (not by the sample draw).
/// Train and test splits share the means but draw samples from separate
/// streams. Image shapes whose sides divide by 4 get piecewise-constant means
/// on 4x4 blocks so that the classes differ in coarse spatial structure.
LabeledDataset synth_blobs(const BlobConfig& cfg, Split split = Split::Train);

/// The class means used by synth_blobs, in the normalized [0, 1] units.
std::vector<std::vector<double>> blob_means(const BlobConfig& cfg);

struct RetainForget {
  LabeledDataset retain;
  LabeledDataset forget;
};

RetainForget split_retain_forget(const LabeledDataset& data, const ForgetSpec& spec);

LabeledDataset filter_classes(const LabeledDataset& data, const std::set<int>& classes);
LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> indices);
std::set<int> present_classes(const LabeledDataset& data);

/// Seeded choice of `count` distinct forget classes.
ForgetSpec random_forget_spec(int class_count, int count, std::uint64_t seed);

/// Builds a channel-major batch from the chosen samples.
nn::FeatureMap make_batch(const LabeledDataset& data, std::span<const std::size_t> indices);
nn::FeatureMap make_batch(const LabeledDataset& data, std::size_t begin, std::size_t end);
std::vector<int> batch_labels(const LabeledDataset& data, std::span<const std::size_t> indices);

/// Plain-text `key = value` manifest naming IDX paths, class count and the
/// pixel normalization divisor. Relative paths resolve against the manifest.
struct DatasetManifest {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  int class_count = 10;
  double normalization = 255.0;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace damp::data
