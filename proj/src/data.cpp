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

#include "damp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "damp/checkpoint.hpp"
#include "damp/error.hpp"

namespace damp::data {

void LabeledDataset::push_back(std::span<const float> x, int label) {
  require(static_cast<int>(x.size()) == shape.size(), ErrorKind::InvalidArgument,
          "sample length does not match dataset shape");
  inputs.insert(inputs.end(), x.begin(), x.end());
  labels.push_back(label);
}

void validate(const LabeledDataset& data) {
  require(data.inputs.size() == data.size() * static_cast<std::size_t>(data.shape.size()),
          ErrorKind::Consistency, "input buffer does not match sample count");
  for (int y : data.labels) {
    require(y >= 0 && y < data.class_count, ErrorKind::Consistency, "label out of range");
  }
  for (float v : data.inputs) {
    require(v >= 0.0f && v <= 1.0f, ErrorKind::Consistency, "input value outside [0, 1]");
  }
}

void validate(const ForgetSpec& spec, int class_count) {
  require(!spec.classes.empty(), ErrorKind::InvalidArgument, "forget spec is empty");
  for (int c : spec.classes) {
    require(c >= 0 && c < class_count, ErrorKind::InvalidArgument,
            "forget class " + std::to_string(c) + " outside [0, " + std::to_string(class_count) +
                ")");
  }
  require(static_cast<int>(spec.classes.size()) < class_count, ErrorKind::InvalidArgument,
          "forget spec covers every class");
}

// --- IDX ------------------------------------------------------------------

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int class_count, double scale, Split split) {
  require(scale > 0.0, ErrorKind::InvalidArgument, "normalization divisor must be positive");
  const auto img = io::read_file(images);
  const auto lab = io::read_file(labels);

  require(img.size() >= 16, ErrorKind::Format, "IDX image header truncated: " + images.string());
  require(read_be32(img, 0) == 0x00000803u, ErrorKind::Format,
          "bad IDX image magic in " + images.string());
  require(lab.size() >= 8, ErrorKind::Format, "IDX label header truncated: " + labels.string());
  require(read_be32(lab, 0) == 0x00000801u, ErrorKind::Format,
          "bad IDX label magic in " + labels.string());

  const std::size_t n_img = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  const std::size_t n_lab = read_be32(lab, 4);
  require(img.size() == 16 + n_img * rows * cols, ErrorKind::Format,
          "IDX image payload truncated or oversized: " + images.string());
  require(lab.size() == 8 + n_lab, ErrorKind::Format,
          "IDX label payload truncated or oversized: " + labels.string());
  require(n_img == n_lab, ErrorKind::Consistency,
          "image count " + std::to_string(n_img) + " != label count " + std::to_string(n_lab));

  LabeledDataset d;
  d.shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
  d.class_count = class_count;
  d.split = split;
  d.inputs.resize(n_img * rows * cols);
  for (std::size_t i = 0; i < d.inputs.size(); ++i) {
    d.inputs[i] = static_cast<float>(std::min(1.0, img[16 + i] / scale));
  }
  d.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) {
    const int y = lab[8 + i];
    require(y < class_count, ErrorKind::Consistency, "IDX label exceeds class count");
    d.labels[i] = y;
  }
  return d;
}

// --- synthetic blobs ------------------------------------------------------

namespace {

struct BlobLayout {
  int block = 1;
  nn::InputShape coarse;
  double side = 0.0;  // means live in [0, side]^D before normalization
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::vector<double>> coarse_means;
};

BlobLayout make_layout(const BlobConfig& cfg) {
  require(cfg.class_count >= 2, ErrorKind::InvalidArgument, "class_count must be at least 2");
  require(cfg.separation > 0.0, ErrorKind::InvalidArgument, "separation must be positive");
  require(cfg.noise >= 0.0, ErrorKind::InvalidArgument, "noise must be non-negative");
  require(cfg.per_class >= 0, ErrorKind::InvalidArgument, "per_class must be non-negative");
  BlobLayout l;
  const auto& s = cfg.shape;
  l.block = (s.height >= 4 && s.width >= 4 && s.height % 4 == 0 && s.width % 4 == 0) ? 4 : 1;
  l.coarse = {s.channels, s.height / l.block, s.width / l.block};
  const int dim = l.coarse.size();
  // Replicating a coarse value over a block x block patch scales distances by block.
  const double need = cfg.separation / l.block;
  l.side = 1.5 * need;

  std::mt19937_64 rng(cfg.seed);
  for (int attempt = 0;; ++attempt) {
    std::uniform_real_distribution<double> u(0.0, l.side);
    l.coarse_means.clear();
    bool ok = true;
    for (int c = 0; c < cfg.class_count && ok; ++c) {
      bool placed = false;
      for (int tries = 0; tries < 1000 && !placed; ++tries) {
        std::vector<double> m(static_cast<std::size_t>(dim));
        for (auto& v : m) v = u(rng);
        placed = std::all_of(l.coarse_means.begin(), l.coarse_means.end(), [&](const auto& o) {
          double d2 = 0.0;
          for (std::size_t i = 0; i < m.size(); ++i) d2 += (m[i] - o[i]) * (m[i] - o[i]);
          return std::sqrt(d2) >= need;
        });
        if (placed) l.coarse_means.push_back(std::move(m));
      }
      ok = placed;
    }
    if (ok) break;
    require(attempt < 50, ErrorKind::InvalidArgument, "cannot place separated class means");
    l.side *= 1.25;
  }
  l.lo = -5.0 * cfg.noise;
  l.hi = l.side + 5.0 * cfg.noise;
  if (l.hi <= l.lo) l.hi = l.lo + 1.0;
  return l;
}

std::vector<double> full_mean(const BlobLayout& l, const nn::InputShape& s, int cls) {
  std::vector<double> m(static_cast<std::size_t>(s.size()));
  const auto& cm = l.coarse_means[static_cast<std::size_t>(cls)];
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const int cy = y / l.block;
        const int cx = x / l.block;
        m[static_cast<std::size_t>((c * s.height + y) * s.width + x)] =
            cm[static_cast<std::size_t>((c * l.coarse.height + cy) * l.coarse.width + cx)];
      }
    }
  }
  return m;
}

}  // namespace

std::vector<std::vector<double>> blob_means(const BlobConfig& cfg) {
  const BlobLayout l = make_layout(cfg);
  std::vector<std::vector<double>> out;
  for (int c = 0; c < cfg.class_count; ++c) {
    auto m = full_mean(l, cfg.shape, c);
    for (auto& v : m) v = (v - l.lo) / (l.hi - l.lo);
    out.push_back(std::move(m));
  }
  return out;
}

LabeledDataset synth_blobs(const BlobConfig& cfg, Split split) {
  const BlobLayout l = make_layout(cfg);
  LabeledDataset d;
  d.shape = cfg.shape;
  d.class_count = cfg.class_count;
  d.split = split;
  std::seed_seq seq{cfg.seed, std::uint64_t{split == Split::Train ? 1u : 2u}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, cfg.noise > 0.0 ? cfg.noise : 1.0);
  const double span = l.hi - l.lo;
  std::vector<float> x(static_cast<std::size_t>(cfg.shape.size()));
  for (int c = 0; c < cfg.class_count; ++c) {
    const auto mean = full_mean(l, cfg.shape, c);
    for (int i = 0; i < cfg.per_class; ++i) {
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double e = cfg.noise > 0.0 ? noise(rng) : 0.0;
        x[k] = static_cast<float>(std::clamp((mean[k] + e - l.lo) / span, 0.0, 1.0));
      }
      d.push_back(x, c);
    }
  }
  return d;
}

// --- splitting --------------------------------------------------------------

std::set<int> present_classes(const LabeledDataset& data) {
  return {data.labels.begin(), data.labels.end()};
}

LabeledDataset subset(const LabeledDataset& data, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.shape = data.shape;
  out.class_count = data.class_count;
  out.split = data.split;
  out.inputs.reserve(indices.size() * static_cast<std::size_t>(data.shape.size()));
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.sample(i), data.labels[i]);
  return out;
}

LabeledDataset filter_classes(const LabeledDataset& data, const std::set<int>& classes) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (classes.count(data.labels[i])) idx.push_back(i);
  }
  return subset(data, idx);
}

RetainForget split_retain_forget(const LabeledDataset& data, const ForgetSpec& spec) {
  validate(spec, data.class_count);
  const auto present = present_classes(data);
  for (int c : spec.classes) {
    require(present.count(c) > 0, ErrorKind::MissingClass,
            "forget class " + std::to_string(c) + " has no samples");
  }
  bool has_retain = false;
  for (int c : present) has_retain = has_retain || spec.classes.count(c) == 0;
  require(has_retain, ErrorKind::InvalidArgument, "forget spec covers every class in the data");

  std::vector<std::size_t> retain_idx;
  std::vector<std::size_t> forget_idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (spec.classes.count(data.labels[i]) ? forget_idx : retain_idx).push_back(i);
  }
  return {subset(data, retain_idx), subset(data, forget_idx)};
}

ForgetSpec random_forget_spec(int class_count, int count, std::uint64_t seed) {
  require(count >= 1 && count < class_count, ErrorKind::InvalidArgument,
          "forget count must be in [1, class_count)");
  std::vector<int> all(static_cast<std::size_t>(class_count));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  return {{all.begin(), all.begin() + count}};
}

// --- batches ------------------------------------------------------------------

nn::FeatureMap make_batch(const LabeledDataset& data, std::span<const std::size_t> indices) {
  nn::FeatureMap f;
  f.samples = static_cast<int>(indices.size());
  f.height = data.shape.height;
  f.width = data.shape.width;
  const int loc = data.shape.height * data.shape.width;
  f.data.resize(data.shape.channels, static_cast<Eigen::Index>(indices.size()) * loc);
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const auto x = data.sample(indices[s]);
    for (int c = 0; c < data.shape.channels; ++c) {
      for (int p = 0; p < loc; ++p) {
        f.data(c, static_cast<Eigen::Index>(s) * loc + p) = x[static_cast<std::size_t>(c * loc + p)];
      }
    }
  }
  return f;
}

nn::FeatureMap make_batch(const LabeledDataset& data, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return make_batch(data, idx);
}

std::vector<int> batch_labels(const LabeledDataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data.labels[i]);
  return out;
}

// --- manifest -------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest " + path.string());
  DatasetManifest m;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base / p;
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    require(eq != std::string::npos, ErrorKind::Format, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "train_images") m.train_images = resolve(value);
      else if (key == "train_labels") m.train_labels = resolve(value);
      else if (key == "test_images") m.test_images = resolve(value);
      else if (key == "test_labels") m.test_labels = resolve(value);
      else if (key == "class_count") m.class_count = std::stoi(value);
      else if (key == "normalization") m.normalization = std::stod(value);
      else fail(ErrorKind::Format, where + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      fail(ErrorKind::Format, where + ": bad value for '" + key + "'");
    }
  }
  require(!m.train_images.empty() && !m.train_labels.empty(), ErrorKind::Format,
          path.string() + ": train_images and train_labels are required");
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "train_images = " << m.train_images.string() << "\n"
      << "train_labels = " << m.train_labels.string() << "\n";
  if (!m.test_images.empty()) out << "test_images = " << m.test_images.string() << "\n";
  if (!m.test_labels.empty()) out << "test_labels = " << m.test_labels.string() << "\n";
  out << "class_count = " << m.class_count << "\n"
      << "normalization = " << m.normalization << "\n";
  io::write_text(path, out.str());
}

}  // namespace damp::data
