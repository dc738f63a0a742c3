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

#include "sevit/checkpoint.hpp"

#include <algorithm>

#include "sevit/error.hpp"
#include "sevit/io.hpp"

namespace sevit {

std::string encode_checkpoint(std::span<const NamedTensor> tensors) {
  io::BinaryWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_u32(kCheckpointVersion);
  for (const auto& t : tensors) {
    if (ad::shape_size(t.shape) != t.data.size()) {
      throw DimensionError("checkpoint record '" + t.name + "': shape " +
                           ad::shape_string(t.shape) + " vs " + std::to_string(t.data.size()) +
                           " values");
    }
    w.put_string(t.name);
    w.put_u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put_u64(d);
    for (double v : t.data) w.put_f64(v);
  }
  return w.take();
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes, const std::string& context) {
  io::BinaryReader r(bytes, context);
  if (bytes.size() < 4 || r.bytes(4) != kCheckpointMagic) {
    throw LoadError(context + ": not a checkpoint (bad magic)");
  }
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw LoadError(context + ": unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<NamedTensor> out;
  while (!r.at_end()) {
    NamedTensor t;
    t.name = r.string();
    const auto rank = r.u32();
    if (rank > 2) throw LoadError(context + ": record '" + t.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(r.u64());
    const auto n = ad::shape_size(t.shape);
    t.data.resize(n);
    for (auto& v : t.data) v = r.f64();
    out.push_back(std::move(t));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  io::atomic_write(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const NamedTensor& t) { return t.name == name; });
  if (it == tensors.end()) throw LoadError("checkpoint has no tensor '" + std::string(name) + "'");
  return *it;
}

bool has_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const NamedTensor& t) { return t.name == name; });
}

}  // namespace sevit
