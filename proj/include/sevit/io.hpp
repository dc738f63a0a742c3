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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

// Little-endian binary encoding and crash-safe file output.
namespace sevit::io {

class BinaryWriter {
 public:
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_f64(double v);
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  // u32 length followed by the raw bytes.
  void put_string(std::string_view s);

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Reads from an in-memory buffer; any overrun throws LoadError naming
// `context`.
class BinaryReader {
 public:
  BinaryReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string_view bytes(std::size_t n);
  std::string string();

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t position() const { return pos_; }
  const std::string& context() const { return context_; }

 private:
  void need(std::size_t n) const;

  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

// Whole file contents. Missing file -> NotFoundError, other failures -> IoError.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary and renames over `target`, so readers see
// either the old file or the complete new one.
void atomic_write(const std::filesystem::path& target, std::string_view bytes);
void atomic_write_with(const std::filesystem::path& target,
                       const std::function<void(std::ostream&)>& writer);

}  // namespace sevit::io
