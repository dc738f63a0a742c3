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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

// Per-video frame matrices and their on-disk container.
//
//   magic (4 bytes) | version u32 | dim u32 | video blocks until EOF
//   block = video_id (u32 length + bytes) | frames u32 | timestamps f64[frames]
//           | row-major f64[frames x dim]
//
// "SVRF" holds raw frame features, "SVFS" unit-normalized frame vectors.
namespace sevit {

inline constexpr std::string_view kRawVideoMagic = "SVRF";
inline constexpr std::string_view kFrameStoreMagic = "SVFS";
inline constexpr std::uint32_t kFrameFileVersion = 1;

struct VideoFrames {
  std::string video_id;
  std::vector<double> timestamps;  // seconds, one per frame
  std::vector<double> values;      // frames x dim, row-major

  std::size_t num_frames() const { return timestamps.size(); }
};

class FrameTable {
 public:
  explicit FrameTable(std::size_t dim) : dim_(dim) {}
  virtual ~FrameTable() = default;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return videos_.size(); }
  bool empty() const { return videos_.empty(); }
  bool contains(std::string_view video_id) const;

  // Throws LookupError for unknown ids.
  const VideoFrames& video(std::string_view video_id) const;
  std::size_t num_frames(std::string_view video_id) const { return video(video_id).num_frames(); }
  std::span<const double> frame(std::string_view video_id, std::size_t index) const;
  // In insertion order.
  std::span<const VideoFrames> videos() const { return videos_; }

  void add(VideoFrames video);

  std::string encode(std::string_view magic) const;

  bool operator==(const FrameTable& other) const;

 protected:
  virtual void validate(const VideoFrames& video) const;
  void decode_into(std::string_view bytes, std::string_view magic, const std::string& context);

 private:
  std::size_t dim_;
  std::vector<VideoFrames> videos_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Raw frame features per video. All-zero frames are rejected at ingestion.
class RawVideoSet : public FrameTable {
 public:
  explicit RawVideoSet(std::size_t dim) : FrameTable(dim) {}

  std::string encode() const { return FrameTable::encode(kRawVideoMagic); }
  static RawVideoSet decode(std::string_view bytes, const std::string& context);
  void save(const std::filesystem::path& path) const;
  static RawVideoSet load(const std::filesystem::path& path);

 protected:
  void validate(const VideoFrames& video) const override;
};

// Pre-computed unit-norm frame vectors. Inner product over this store is
// cosine similarity.
class FrameVectorStore : public FrameTable {
 public:
  static constexpr double kNormTolerance = 1e-9;

  explicit FrameVectorStore(std::size_t dim) : FrameTable(dim) {}

  std::string encode() const { return FrameTable::encode(kFrameStoreMagic); }
  static FrameVectorStore decode(std::string_view bytes, const std::string& context);
  void save(const std::filesystem::path& path) const;
  static FrameVectorStore load(const std::filesystem::path& path);

 protected:
  void validate(const VideoFrames& video) const override;
};

}  // namespace sevit
