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

#include "damp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>

#include <zlib.h>

#include "damp/error.hpp"

namespace damp::io {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t limit) : b_(b), limit_(limit) {}
  void need(std::size_t n) const {
    require(pos_ + n <= limit_, ErrorKind::Format, "checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

struct TensorSlot {
  std::vector<std::uint64_t> shape;
  // Row-major element accessors over the owning Eigen object.
  std::function<double(std::size_t)> get;
  std::function<void(std::size_t, double)> set;
};

TensorSlot matrix_slot(nn::Matrix& m, std::vector<std::uint64_t> shape) {
  const auto cols = static_cast<std::size_t>(m.cols());
  return {std::move(shape),
          [&m, cols](std::size_t i) {
            return m(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols));
          },
          [&m, cols](std::size_t i, double v) {
            m(static_cast<Eigen::Index>(i / cols), static_cast<Eigen::Index>(i % cols)) = v;
          }};
}

TensorSlot vector_slot(nn::Vector& v) {
  return {{static_cast<std::uint64_t>(v.size())},
          [&v](std::size_t i) { return v(static_cast<Eigen::Index>(i)); },
          [&v](std::size_t i, double x) { v(static_cast<Eigen::Index>(i)) = x; }};
}

std::vector<std::pair<std::string, TensorSlot>> tensor_slots(nn::StageModel& m) {
  std::vector<std::pair<std::string, TensorSlot>> out;
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    auto& s = m.stages[i];
    const std::string p = "stage" + std::to_string(i + 1) + ".";
    std::vector<std::uint64_t> wshape;
    if (s.op == nn::OpKind::Conv) {
      wshape = {static_cast<std::uint64_t>(s.out_channels),
                static_cast<std::uint64_t>(s.in_channels), static_cast<std::uint64_t>(s.kernel),
                static_cast<std::uint64_t>(s.kernel)};
    } else {
      wshape = {static_cast<std::uint64_t>(s.out_channels),
                static_cast<std::uint64_t>(s.in_channels)};
    }
    out.emplace_back(p + "weight", matrix_slot(s.weight, wshape));
    out.emplace_back(p + "bias", vector_slot(s.bias));
    if (s.norm) {
      out.emplace_back(p + "norm.scale", vector_slot(s.norm_scale));
      out.emplace_back(p + "norm.shift", vector_slot(s.norm_shift));
      out.emplace_back(p + "norm.running_mean", vector_slot(s.running_mean));
      out.emplace_back(p + "norm.running_var", vector_slot(s.running_var));
    }
  }
  out.emplace_back("head.weight",
                   matrix_slot(m.head_weight, {static_cast<std::uint64_t>(m.head_weight.rows()),
                                               static_cast<std::uint64_t>(m.head_weight.cols())}));
  out.emplace_back("head.bias", vector_slot(m.head_bias));
  return out;
}

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; checkpoints here are far below 4 GiB.
  crc = crc32(crc, p, static_cast<uInt>(n));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize(const nn::StageModel& model, std::uint32_t version) {
  nn::StageModel m = model;  // slots bind to mutable storage
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(version);
  w.str(m.arch.tag);
  w.u32(static_cast<std::uint32_t>(m.input.channels));
  w.u32(static_cast<std::uint32_t>(m.input.height));
  w.u32(static_cast<std::uint32_t>(m.input.width));
  w.u32(static_cast<std::uint32_t>(m.class_count));
  for (int width : m.arch.widths) w.u32(static_cast<std::uint32_t>(width));

  auto slots = tensor_slots(m);
  w.u32(static_cast<std::uint32_t>(slots.size() + 1));
  for (auto& [name, slot] : slots) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(DType::Float64));
    w.u32(static_cast<std::uint32_t>(slot.shape.size()));
    std::uint64_t count = 1;
    for (auto d : slot.shape) {
      w.u64(d);
      count *= d;
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      w.u64(std::bit_cast<std::uint64_t>(slot.get(static_cast<std::size_t>(i))));
    }
  }
  w.str("output_mask");
  w.u8(static_cast<std::uint8_t>(DType::Int32));
  w.u32(1);
  w.u64(m.output_mask.size());
  for (int c : m.output_mask) w.u32(static_cast<std::uint32_t>(c));

  auto& buf = w.buffer();
  w.u32(crc_of(buf.data(), buf.size()));
  return std::move(buf);
}

nn::StageModel deserialize(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= sizeof kCheckpointMagic + 8, ErrorKind::Format, "checkpoint truncated");
  require(std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) == 0,
          ErrorKind::Format, "not a DAMPCKPT container");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  for (std::size_t i = 0; i < sizeof kCheckpointMagic; ++i) r.u8();
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorKind::Version,
          "unsupported checkpoint version " + std::to_string(version));

  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) stored_crc |= std::uint32_t{bytes[body + i]} << (8 * i);
  require(stored_crc == crc_of(bytes.data(), body), ErrorKind::Corruption,
          "checkpoint checksum mismatch");

  const std::string tag = r.str();
  nn::ArchSpec arch;
  try {
    arch = nn::arch_from_name(tag);
  } catch (const Error&) {
    fail(ErrorKind::Format, "checkpoint names unknown architecture '" + tag + "'");
  }
  nn::InputShape input;
  input.channels = static_cast<int>(r.u32());
  input.height = static_cast<int>(r.u32());
  input.width = static_cast<int>(r.u32());
  const int class_count = static_cast<int>(r.u32());
  for (auto& width : arch.widths) width = static_cast<int>(r.u32());

  nn::StageModel m = nn::build_model(arch, input, class_count, 0);
  auto slots = tensor_slots(m);
  std::map<std::string, TensorSlot*> by_name;
  for (auto& [name, slot] : slots) by_name[name] = &slot;
  std::map<std::string, bool> seen;

  const std::uint32_t records = r.u32();
  for (std::uint32_t k = 0; k < records; ++k) {
    const std::string name = r.str();
    const auto dtype = static_cast<DType>(r.u8());
    const std::uint32_t ndim = r.u32();
    std::vector<std::uint64_t> shape(ndim);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      count *= d;
    }
    if (name == "output_mask") {
      require(dtype == DType::Int32 && ndim == 1, ErrorKind::Format, "bad output_mask record");
      for (std::uint64_t i = 0; i < count; ++i) {
        m.output_mask.push_back(static_cast<int>(r.u32()));
      }
      continue;
    }
    auto it = by_name.find(name);
    require(it != by_name.end(), ErrorKind::Format, "unexpected tensor '" + name + "'");
    require(dtype == DType::Float64, ErrorKind::Format, "unsupported dtype for '" + name + "'");
    require(shape == it->second->shape, ErrorKind::Format, "shape mismatch for '" + name + "'");
    for (std::uint64_t i = 0; i < count; ++i) {
      it->second->set(static_cast<std::size_t>(i), std::bit_cast<double>(r.u64()));
    }
    seen[name] = true;
  }
  require(r.pos() == body, ErrorKind::Format, "trailing bytes in checkpoint");
  for (auto& [name, slot] : slots) {
    require(seen.count(name) > 0, ErrorKind::Format, "missing tensor '" + name + "'");
  }
  return m;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void save_checkpoint(const nn::StageModel& model, const std::filesystem::path& path) {
  write_file(path, serialize(model));
}

nn::StageModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

}  // namespace damp::io
