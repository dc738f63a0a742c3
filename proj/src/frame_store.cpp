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

#include "sevit/frame_store.hpp"

#include <cmath>

#include "sevit/error.hpp"
#include "sevit/io.hpp"

namespace sevit {

bool FrameTable::contains(std::string_view video_id) const {
  return index_.count(std::string(video_id)) != 0;
}

const VideoFrames& FrameTable::video(std::string_view video_id) const {
  auto it = index_.find(std::string(video_id));
  if (it == index_.end()) throw LookupError("unknown video '" + std::string(video_id) + "'");
  return videos_[it->second];
}

std::span<const double> FrameTable::frame(std::string_view video_id, std::size_t index) const {
  const auto& v = video(video_id);
  if (index >= v.num_frames()) {
    throw IndexError("video '" + v.video_id + "' has " + std::to_string(v.num_frames()) +
                     " frames, asked for frame " + std::to_string(index));
  }
  return std::span<const double>(v.values).subspan(index * dim_, dim_);
}

void FrameTable::validate(const VideoFrames& video) const {
  if (video.values.size() != video.num_frames() * dim_) {
    throw DimensionError("video '" + video.video_id + "': " + std::to_string(video.values.size()) +
                         " values for " + std::to_string(video.num_frames()) + " frames of dim " +
                         std::to_string(dim_));
  }
}

void FrameTable::add(VideoFrames video) {
  if (contains(video.video_id)) {
    throw ValidationError("duplicate video id '" + video.video_id + "'");
  }
  validate(video);
  index_.emplace(video.video_id, videos_.size());
  videos_.push_back(std::move(video));
}

std::string FrameTable::encode(std::string_view magic) const {
  io::BinaryWriter w;
  w.put_bytes(magic);
  w.put_u32(kFrameFileVersion);
  w.put_u32(static_cast<std::uint32_t>(dim_));
  for (const auto& v : videos_) {
    w.put_string(v.video_id);
    w.put_u32(static_cast<std::uint32_t>(v.num_frames()));
    for (double t : v.timestamps) w.put_f64(t);
    for (double x : v.values) w.put_f64(x);
  }
  return w.take();
}

void FrameTable::decode_into(std::string_view bytes, std::string_view magic,
                             const std::string& context) {
  io::BinaryReader r(bytes, context);
  if (bytes.size() < 4 || r.bytes(4) != magic) {
    throw LoadError(context + ": expected magic " + std::string(magic));
  }
  const auto version = r.u32();
  if (version != kFrameFileVersion) {
    throw LoadError(context + ": unsupported version " + std::to_string(version));
  }
  const auto dim = r.u32();
  if (dim != dim_) {
    throw LoadError(context + ": dimension " + std::to_string(dim) + ", expected " +
                    std::to_string(dim_));
  }
  while (!r.at_end()) {
    VideoFrames v;
    v.video_id = r.string();
    const auto n = r.u32();
    v.timestamps.resize(n);
    for (auto& t : v.timestamps) t = r.f64();
    v.values.resize(static_cast<std::size_t>(n) * dim_);
    for (auto& x : v.values) x = r.f64();
    try {
      add(std::move(v));
    } catch (const ValidationError& e) {
      throw LoadError(context + ": " + e.what());
    }
  }
}

bool FrameTable::operator==(const FrameTable& other) const {
  if (dim_ != other.dim_ || videos_.size() != other.videos_.size()) return false;
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    const auto& a = videos_[i];
    const auto& b = other.videos_[i];
    if (a.video_id != b.video_id || a.timestamps != b.timestamps || a.values != b.values) {
      return false;
    }
  }
  return true;
}

namespace {

std::uint32_t peek_dim(std::string_view bytes, const std::string& context) {
  io::BinaryReader r(bytes, context);
  r.bytes(4);
  r.u32();
  return r.u32();
}

}  // namespace

void RawVideoSet::validate(const VideoFrames& video) const {
  FrameTable::validate(video);
  for (std::size_t f = 0; f < video.num_frames(); ++f) {
    bool nonzero = false;
    for (std::size_t j = 0; j < dim(); ++j) {
      const double x = video.values[f * dim() + j];
      if (!std::isfinite(x)) {
        throw ValidationError("video '" + video.video_id + "' frame " + std::to_string(f) +
                              ": non-finite feature");
      }
      nonzero = nonzero || x != 0.0;
    }
    if (!nonzero) {
      throw ValidationError("video '" + video.video_id + "' frame " + std::to_string(f) +
                            ": zero feature vector");
    }
  }
}

RawVideoSet RawVideoSet::decode(std::string_view bytes, const std::string& context) {
  RawVideoSet set(peek_dim(bytes, context));
  set.decode_into(bytes, kRawVideoMagic, context);
  return set;
}

void RawVideoSet::save(const std::filesystem::path& path) const { io::atomic_write(path, encode()); }

RawVideoSet RawVideoSet::load(const std::filesystem::path& path) {
  return decode(io::read_file(path), path.string());
}

void FrameVectorStore::validate(const VideoFrames& video) const {
  FrameTable::validate(video);
  for (std::size_t f = 0; f < video.num_frames(); ++f) {
    double ss = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      const double x = video.values[f * dim() + j];
      ss += x * x;
    }
    if (!(std::abs(std::sqrt(ss) - 1.0) <= kNormTolerance)) {
      throw ValidationError("video '" + video.video_id + "' frame " + std::to_string(f) +
                            ": stored vector is not unit norm");
    }
  }
}

FrameVectorStore FrameVectorStore::decode(std::string_view bytes, const std::string& context) {
  FrameVectorStore store(peek_dim(bytes, context));
  store.decode_into(bytes, kFrameStoreMagic, context);
  return store;
}

void FrameVectorStore::save(const std::filesystem::path& path) const {
  io::atomic_write(path, encode());
}

FrameVectorStore FrameVectorStore::load(const std::filesystem::path& path) {
  return decode(io::read_file(path), path.string());
}

}  // namespace sevit
