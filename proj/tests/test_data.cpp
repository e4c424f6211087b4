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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <tuple>
#include <vector>

#include "doctest.h"
#include "damp/checkpoint.hpp"
#include "damp/data.hpp"
#include "damp/error.hpp"
#include "damp/model.hpp"
#include "helpers.hpp"

using namespace damp;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::InvalidState;
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

void append(std::vector<std::uint8_t>& out, const std::vector<std::uint8_t>& b) {
  out.insert(out.end(), b.begin(), b.end());
}

// Multiset of (input bytes, label) pairs.
std::map<std::pair<std::vector<float>, int>, int> multiset(const data::LabeledDataset& d) {
  std::map<std::pair<std::vector<float>, int>, int> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto s = d.sample(i);
    ++out[{std::vector<float>(s.begin(), s.end()), d.labels[i]}];
  }
  return out;
}

}  // namespace

TEST_CASE("hand-built IDX pair decodes byte for byte") {
  const auto dir = testing::scratch_dir("idx");
  std::vector<std::uint8_t> img;
  append(img, {0x00, 0x00, 0x08, 0x03});
  append(img, be32(2));
  append(img, be32(4));
  append(img, be32(4));
  for (int i = 0; i < 32; ++i) img.push_back(static_cast<std::uint8_t>(i * 8));
  std::vector<std::uint8_t> lab{0x00, 0x00, 0x08, 0x01};
  append(lab, be32(2));
  lab.push_back(7);
  lab.push_back(2);
  io::write_file(dir / "img.idx", img);
  io::write_file(dir / "lab.idx", lab);

  const auto d = data::load_idx(dir / "img.idx", dir / "lab.idx");
  REQUIRE(d.size() == 2);
  CHECK(d.shape == nn::InputShape{1, 4, 4});
  CHECK(d.labels == std::vector<int>{7, 2});
  CHECK(d.sample(0)[0] == 0.0f);
  CHECK(d.sample(0)[5] == doctest::Approx(40.0 / 255.0));
  CHECK(d.sample(1)[15] == doctest::Approx(248.0 / 255.0));

  SUBCASE("big-endian header fields") {
    // 0x00000102 rows would be 258 when read big-endian, 33619968 little-endian.
    std::vector<std::uint8_t> wide{0x00, 0x00, 0x08, 0x03};
    append(wide, be32(1));
    append(wide, {0x00, 0x00, 0x01, 0x02});
    append(wide, be32(1));
    wide.resize(wide.size() + 258, 255);
    std::vector<std::uint8_t> one{0x00, 0x00, 0x08, 0x01};
    append(one, be32(1));
    one.push_back(1);
    io::write_file(dir / "wide.idx", wide);
    io::write_file(dir / "one.idx", one);
    const auto w = data::load_idx(dir / "wide.idx", dir / "one.idx");
    CHECK(w.shape == nn::InputShape{1, 258, 1});
    CHECK(w.sample(0)[257] == 1.0f);
  }
  SUBCASE("truncated image file") {
    img.resize(img.size() - 3);
    io::write_file(dir / "short.idx", img);
    CHECK(kind_of([&] { data::load_idx(dir / "short.idx", dir / "lab.idx"); }) == ErrorKind::Format);
  }
  SUBCASE("count mismatch") {
    std::vector<std::uint8_t> l1{0x00, 0x00, 0x08, 0x01};
    append(l1, be32(1));
    l1.push_back(3);
    io::write_file(dir / "l1.idx", l1);
    CHECK(kind_of([&] { data::load_idx(dir / "img.idx", dir / "l1.idx"); }) == ErrorKind::Consistency);
  }
  SUBCASE("bad magic") {
    img[3] = 0x04;
    io::write_file(dir / "magic.idx", img);
    CHECK(kind_of([&] { data::load_idx(dir / "magic.idx", dir / "lab.idx"); }) == ErrorKind::Format);
  }
  SUBCASE("label beyond the class count") {
    CHECK(kind_of([&] { data::load_idx(dir / "img.idx", dir / "lab.idx", 5); }) == ErrorKind::Consistency);
  }
  fs::remove_all(dir);
}

TEST_CASE("empty IDX files load as an empty dataset") {
  const auto dir = testing::scratch_dir("idx-empty");
  std::vector<std::uint8_t> img{0x00, 0x00, 0x08, 0x03};
  append(img, be32(0));
  append(img, be32(28));
  append(img, be32(28));
  std::vector<std::uint8_t> lab{0x00, 0x00, 0x08, 0x01};
  append(lab, be32(0));
  io::write_file(dir / "i", img);
  io::write_file(dir / "l", lab);
  const auto d = data::load_idx(dir / "i", dir / "l");
  CHECK(d.empty());
  fs::remove_all(dir);
}

TEST_CASE("dataset manifest round trip") {
  const auto dir = testing::scratch_dir("manifest");
  data::DatasetManifest m;
  m.train_images = "train-images.idx";
  m.train_labels = "train-labels.idx";
  m.test_images = "t10k-images.idx";
  m.test_labels = "t10k-labels.idx";
  m.class_count = 10;
  m.normalization = 255.0;
  data::write_manifest(m, dir / "mnist.manifest");
  const auto back = data::read_manifest(dir / "mnist.manifest");
  CHECK(back.train_images == dir / "train-images.idx");
  CHECK(back.test_labels == dir / "t10k-labels.idx");
  CHECK(back.class_count == 10);
  CHECK(back.normalization == 255.0);

  io::write_text(dir / "bad.manifest", "train_images = a\nfrobnicate = 1\n");
  CHECK(kind_of([&] { data::read_manifest(dir / "bad.manifest"); }) == ErrorKind::Format);
  CHECK(kind_of([&] { data::read_manifest(dir / "missing.manifest"); }) == ErrorKind::Io);
  fs::remove_all(dir);
}

TEST_CASE("synthetic blobs") {
  data::BlobConfig cfg;
  cfg.class_count = 10;
  cfg.per_class = 100;
  cfg.separation = 10.0;
  cfg.noise = 1.0;
  cfg.seed = 3;

  SUBCASE("nearest class mean classifies at least 99.9 percent") {
    const auto d = data::synth_blobs(cfg);
    data::validate(d);
    const auto means = data::blob_means(cfg);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto x = d.sample(i);
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < cfg.class_count; ++c) {
        double dist = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
          const double diff = x[k] - means[static_cast<std::size_t>(c)][k];
          dist += diff * diff;
        }
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      correct += best == d.labels[i] ? 1 : 0;
    }
    CHECK(100.0 * static_cast<double>(correct) / static_cast<double>(d.size()) >= 99.9);
  }
  SUBCASE("same seed, same data; splits differ") {
    const auto a = data::synth_blobs(cfg);
    const auto b = data::synth_blobs(cfg);
    CHECK(a.inputs == b.inputs);
    CHECK(a.labels == b.labels);
    const auto t = data::synth_blobs(cfg, data::Split::Test);
    CHECK(t.inputs != a.inputs);
  }
  SUBCASE("zero per class") {
    cfg.per_class = 0;
    CHECK(data::synth_blobs(cfg).empty());
  }
  SUBCASE("image shapes stay in range") {
    cfg.shape = {1, 16, 16};
    cfg.per_class = 5;
    const auto d = data::synth_blobs(cfg);
    data::validate(d);
    CHECK(d.size() == 50);
  }
}

TEST_CASE("retain/forget split") {
  const auto d = testing::blobs(10, 20, {8, 1, 1}, 1);
  SUBCASE("single class") {
    const auto s = data::split_retain_forget(d, {{3}});
    CHECK(data::present_classes(s.retain).size() == 9);
    CHECK(data::present_classes(s.forget) == std::set<int>{3});
  }
  SUBCASE("two classes") {
    const auto s = data::split_retain_forget(d, {{3, 5}});
    const auto count = [&](int c) { return std::count(d.labels.begin(), d.labels.end(), c); };
    CHECK(static_cast<long>(s.forget.size()) == count(3) + count(5));
  }
  SUBCASE("partition of the multiset") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = testing::blobs(6, 7, {3, 2, 2}, seed);
      const auto spec = data::random_forget_spec(6, 2, seed);
      const auto s = data::split_retain_forget(r, spec);
      auto joined = multiset(s.retain);
      for (const auto& [k, n] : multiset(s.forget)) joined[k] += n;
      CHECK(joined == multiset(r));
      CHECK(s.retain.size() + s.forget.size() == r.size());
    }
  }
  SUBCASE("bad specs") {
    CHECK(kind_of([&] { data::split_retain_forget(d, {{}}); }) == ErrorKind::InvalidArgument);
    CHECK(kind_of([&] { data::split_retain_forget(d, {{12}}); }) == ErrorKind::InvalidArgument);
    const auto no3 = data::filter_classes(d, {0, 1, 2});
    CHECK(kind_of([&] { data::split_retain_forget(no3, {{3}}); }) == ErrorKind::MissingClass);
  }
}

TEST_CASE("random forget spec is seeded and without replacement") {
  const auto a = data::random_forget_spec(10, 3, 9);
  const auto b = data::random_forget_spec(10, 3, 9);
  CHECK(a.classes == b.classes);
  CHECK(a.classes.size() == 3);
  CHECK_THROWS_AS(data::random_forget_spec(10, 10, 1), Error);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = testing::scratch_dir("ckpt");
  for (const char* arch : {"mlp5", "cnn5-mini", "mlp5-tiny", "cnn5-mini-tiny"}) {
    const nn::InputShape shape = std::string(arch).rfind("mlp", 0) == 0 ? nn::InputShape{64, 1, 1}
                                                                       : nn::InputShape{1, 16, 16};
    auto m = nn::build_model(nn::arch_from_name(arch), shape, 10, 17);
    m.stages[1].bias.setConstant(0.125);
    m.output_mask = {3, 5};
    const auto path = dir / (std::string(arch) + ".dampckpt");
    io::save_checkpoint(m, path);
    const auto back = io::load_checkpoint(path);
    CHECK(nn::fingerprint(back) == nn::fingerprint(m));
    CHECK(back.output_mask == m.output_mask);
    CHECK(back.arch == m.arch);
    CHECK(back.input == m.input);
    CHECK(io::serialize(back) == io::serialize(m));
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint integrity checks") {
  const auto m = nn::build_model(nn::arch_from_name("mlp5-tiny"), {8, 1, 1}, 3, 1);
  auto bytes = io::serialize(m);
  CHECK(std::equal(bytes.begin(), bytes.begin() + 8, io::kCheckpointMagic));

  SUBCASE("flipped payload byte") {
    bytes[bytes.size() / 2] ^= 0x01;
    CHECK(kind_of([&] { io::deserialize(bytes); }) == ErrorKind::Corruption);
  }
  SUBCASE("future version") {
    CHECK(kind_of([&] { io::deserialize(io::serialize(m, 999)); }) == ErrorKind::Version);
  }
  SUBCASE("truncated") {
    bytes.resize(bytes.size() - 10);
    const auto k = kind_of([&] { io::deserialize(bytes); });
    CHECK((k == ErrorKind::Corruption || k == ErrorKind::Format));
  }
  SUBCASE("wrong magic") {
    bytes[0] = 'X';
    CHECK(kind_of([&] { io::deserialize(bytes); }) == ErrorKind::Format);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { io::load_checkpoint("/nonexistent/x.dampckpt"); }) == ErrorKind::Io);
  }
}
