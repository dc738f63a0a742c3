/*
 * Copyright (c) 2026, The sevit authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sevit/tensor.hpp"

// Parameter checkpoint container:
//   "SEVT" | version u32 | records until EOF
//   record = name_len u32 | name (UTF-8) | rank u32 | dims u64[rank] | f64[prod(dims)]
// All integers and floats little-endian.
namespace sevit {

inline constexpr std::string_view kCheckpointMagic = "SEVT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

std::string encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes, const std::string& context);

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

// Throws LoadError when `name` is absent.
const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name);
bool has_tensor(std::span<const NamedTensor> tensors, std::string_view name);

}  // namespace sevit
