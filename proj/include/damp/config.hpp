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
#include <optional>
#include <string>
#include <vector>

#include "damp/baselines.hpp"
#include "damp/data.hpp"
#include "damp/model.hpp"
#include "damp/surgery.hpp"
#include "damp/train.hpp"

namespace damp::config {

/// Parsed `[section]` / `key = value` text with the line every key came from.
/// `#` and `;` start comments. Keys are unique within a section.
class IniFile {
 public:
  static IniFile parse(const std::string& text, const std::string& origin);
  static IniFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  bool has_section(const std::string& section) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  /// "origin:line" for a key, or just the origin when absent.
  std::string where(const std::string& section, const std::string& key) const;
  const std::string& origin() const { return origin_; }
  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::string origin_;
  std::map<std::string, std::map<std::string, Entry>> values_;
  std::map<std::string, int> section_lines_;
};

enum class DataSource { Synthetic, Idx };

struct DataConfig {
  DataSource source = DataSource::Synthetic;
  data::BlobConfig blobs;          // class_count, shape, separation, noise, per_class (train)
  int per_class_test = 50;
  std::filesystem::path manifest;  // for idx sources
  std::optional<std::uint64_t> data_seed;  // unset: follows the experiment seed
};

struct EvalConfig {
  bool adversarial = false;
  double epsilon = 0.05;
  int pgd_steps = 10;
  bool rdm = true;
  std::size_t rdm_samples = 50;
  int rdm_stage = 0;  // 0 = deepest stage
};

struct ContinualConfig {
  std::vector<int> sequence;
  std::string method = "damp";
};

struct SweepConfig {
  int forget_class = -1;  // -1: first forget class
  std::vector<double> offsets;
};

struct ExperimentConfig {
  std::filesystem::path source;  // the config file
  std::filesystem::path out_dir;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> methods{"damp"};
  DataConfig data;
  std::string arch = "cnn5-mini";
  std::filesystem::path checkpoint;  // empty: <out>/seed-N/baseline.dampckpt
  std::string expected_fingerprint;
  nn::TrainConfig pretrain;
  data::ForgetSpec forget;
  surgery::UnlearnConfig unlearn;
  std::map<std::string, baselines::BaselineConfig> baselines;  // by tag
  EvalConfig eval;
  ContinualConfig continual;
  SweepConfig sweep;
};

/// Known method tags: damp plus the baseline tags.
bool is_known_method(const std::string& tag);

/// Parses and validates. Every failure is a Config error naming the file,
/// line and key.
ExperimentConfig from_ini(const IniFile& ini);
ExperimentConfig load(const std::filesystem::path& path);

/// Command-line overrides; unset fields leave the file value alone.
struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> methods;
  std::optional<bool> adversarial;
};

void apply(ExperimentConfig& cfg, const Overrides& o);

std::vector<std::string> split_list(const std::string& text);

}  // namespace damp::config
