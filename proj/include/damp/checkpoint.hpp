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
#include <string>
#include <vector>

#include "damp/model.hpp"

namespace damp::io {

// Container layout, all integers little-endian:
//   "DAMPCKPT"                     8 bytes
//   version                        u32
//   arch tag                       u32 length + bytes
//   input c, h, w, class count     4 x u32
//   stage widths                   5 x u32
//   record count                   u32
//   records: name (u32 len + bytes), dtype code u8, ndim u32, dims u64 each,
//            payload (element count x dtype size, little-endian)
//   CRC-32 of every preceding byte u32
inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'M', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { Float64 = 1, Int32 = 2 };

std::vector<std::uint8_t> serialize(const nn::StageModel& model,
                                    std::uint32_t version = kCheckpointVersion);
nn::StageModel deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const nn::StageModel& model, const std::filesystem::path& path);
nn::StageModel load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace damp::io
