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

#include "sevit/io.hpp"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sevit/error.hpp"

namespace sevit::io {
namespace {

template <typename T>
void append_le(std::string& buf, T v) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  buf.append(reinterpret_cast<const char*>(raw), sizeof(T));
}

template <typename T>
T read_le(const char* p) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  T v;
  std::memcpy(&v, raw, sizeof(T));
  return v;
}

}  // namespace

void BinaryWriter::put_u32(std::uint32_t v) { append_le(buf_, v); }
void BinaryWriter::put_u64(std::uint64_t v) { append_le(buf_, v); }
void BinaryWriter::put_f64(double v) { append_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void BinaryReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    throw LoadError(context_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                    std::to_string(n) + " more)");
  }
}

std::uint32_t BinaryReader::u32() {
  need(4);
  auto v = read_le<std::uint32_t>(data_.data() + pos_);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  auto v = read_le<std::uint64_t>(data_.data() + pos_);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string_view BinaryReader::bytes(std::size_t n) {
  need(n);
  auto v = data_.substr(pos_, n);
  pos_ += n;
  return v;
}

std::string BinaryReader::string() {
  const auto n = u32();
  return std::string(bytes(n));
}

std::string read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) {
    throw NotFoundError("no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void atomic_write_with(const std::filesystem::path& target,
                       const std::function<void(std::ostream&)>& writer) {
  const auto parent = target.has_parent_path() ? target.parent_path() : std::filesystem::path(".");
  std::error_code ec;
  std::filesystem::create_directories(parent, ec);
  auto tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot create " + tmp.string());
      writer(out);
      out.flush();
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
  } catch (...) {
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

void atomic_write(const std::filesystem::path& target, std::string_view bytes) {
  atomic_write_with(target, [bytes](std::ostream& out) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  });
}

}  // namespace sevit::io
