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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sevit/checkpoint.hpp"
#include "sevit/frame_store.hpp"
#include "sevit/tensor.hpp"

namespace sevit {

struct RetrieverConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;    // query token embedding width
  std::size_t feature_dim = 32;  // raw frame feature width (d_f)
  std::size_t retrieval_dim = 32;  // d_r, must be >= feature_dim
  double temperature = 1.0;
  // Std of the query token embeddings at init; the projection uses
  // query_init_scale / sqrt(embed_dim). Not stored in checkpoints.
  double query_init_scale = 0.1;
};

// Bi-encoder frame retriever.
//
// Query encoder: mean-pooled token embeddings, linear projection, L2 norm.
// Frame encoder: linear projection of raw features, L2 norm. Its weights are
// created without gradient tracking and stay frozen for the life of the
// object; only the query encoder can be trained.
class RetrieverParams {
 public:
  static RetrieverParams init(const RetrieverConfig& config, std::uint64_t seed);
  static RetrieverParams from_checkpoint(std::span<const NamedTensor> tensors);

  const RetrieverConfig& config() const { return config_; }
  double temperature() const { return config_.temperature; }

  const ad::Tensor& query_embedding() const { return query_embedding_; }
  const ad::Tensor& query_projection() const { return query_projection_; }
  const ad::Tensor& frame_projection() const { return frame_projection_; }

  bool query_trainable() const { return query_embedding_.requires_grad(); }
  void set_query_trainable(bool on);
  bool frame_encoder_frozen() const { return !frame_projection_.requires_grad(); }

  // Tensors an optimizer may update (empty when the query encoder is frozen).
  std::vector<ad::Tensor> trainable() const;

  std::vector<NamedTensor> to_checkpoint() const;
  std::vector<NamedTensor> frame_encoder_checkpoint() const;
  void save(const std::filesystem::path& path) const;
  static RetrieverParams load(const std::filesystem::path& path);

 private:
  RetrieverConfig config_;
  ad::Tensor query_embedding_;   // vocab x embed_dim
  ad::Tensor query_projection_;  // embed_dim x retrieval_dim
  ad::Tensor frame_projection_;  // feature_dim x retrieval_dim, frozen
};

// Unit-norm frame vector (1 x d_r). Zero or mis-sized input is rejected.
std::vector<double> encode_frame(std::span<const double> raw_features, const RetrieverParams& params);

// Unit-norm query vector (1 x d_r). Differentiable w.r.t. the query encoder
// when a tape is active and the encoder is trainable.
ad::Tensor encode_query(std::span<const std::size_t> tokens, const RetrieverParams& params);

double cosine_similarity(std::span<const double> q, std::span<const double> f);

inline constexpr double kNoSimilarity = std::numeric_limits<double>::quiet_NaN();

struct RetrievedFrame {
  std::size_t frame_index = 0;
  double similarity = kNoSimilarity;  // NaN for uniform sampling
  double score = 0.0;                 // frame score over the selected set
  double timestamp = 0.0;
};

struct RetrievalResult {
  std::string video_id;
  std::vector<std::size_t> query;
  std::vector<RetrievedFrame> entries;
  bool clamped = false;   // k exceeded the frame count
  bool fallback = false;  // annealing had to reuse suppressed frames

  std::size_t size() const { return entries.size(); }
  std::vector<std::size_t> frame_indices() const;
  std::vector<double> similarities() const;
  std::vector<double> scores() const;
};

std::vector<double> frame_scores(std::span<const double> similarities, double temperature);
std::vector<double> uniform_frame_scores(std::size_t k);

// Exhaustive inner-product scan of one video; top k by similarity, ties by
// ascending frame index. k larger than the video is clamped and flagged.
RetrievalResult retrieve_top_k(const FrameVectorStore& store, const std::string& video_id,
                               std::span<const double> query_vector, std::size_t k,
                               double temperature = 1.0);

// Greedy top-k that suppresses frames within `window` positions of each pick.
// If suppression runs out of candidates the best suppressed frames fill the
// remaining slots and `fallback` is set.
RetrievalResult annealed_top_k(const FrameVectorStore& store, const std::string& video_id,
                               std::span<const double> query_vector, std::size_t k,
                               std::size_t window, double temperature = 1.0);

// Evenly spaced frames with a seeded random phase; uniform 1/k scores.
RetrievalResult uniform_sample_frames(const FrameTable& videos, const std::string& video_id,
                                      std::size_t k, std::uint64_t seed);
// Deterministic variant with an explicit phase in [0, frames / k).
RetrievalResult uniform_sample_frames_at(const FrameTable& videos, const std::string& video_id,
                                         std::size_t k, double phase);

struct AnnealState {
  std::size_t initial_window = 0;  // u0
  std::size_t epochs = 1;          // E
};

// Linear decay round(u0 * (1 - epoch / (E - 1))); 0 when E == 1.
std::size_t anneal_schedule(const AnnealState& state, std::size_t epoch);

// Encodes every frame of every video with the (frozen) frame encoder.
FrameVectorStore build_index(const RawVideoSet& videos, const RetrieverParams& params);

}  // namespace sevit
