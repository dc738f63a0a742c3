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

#include "sevit/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "sevit/error.hpp"
#include "sevit/kernels.hpp"
#include "sevit/ops.hpp"
#include "sevit/rng.hpp"

namespace sevit {
namespace {

constexpr const char* kQueryEmbedding = "retriever.query_embedding";
constexpr const char* kQueryProjection = "retriever.query_projection";
constexpr const char* kFrameProjection = "retriever.frame_projection";
constexpr const char* kTemperature = "retriever.temperature";

// Rows orthonormal: rows x cols with rows <= cols.
std::vector<double> semi_orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::vector<double> w(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double* v = w.data() + r * cols;
    for (;;) {
      for (std::size_t c = 0; c < cols; ++c) v[c] = rng.normal();
      for (std::size_t p = 0; p < r; ++p) {
        const double* u = w.data() + p * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += u[c] * v[c];
        for (std::size_t c = 0; c < cols; ++c) v[c] -= dot * u[c];
      }
      double ss = 0.0;
      for (std::size_t c = 0; c < cols; ++c) ss += v[c] * v[c];
      if (ss > 1e-12) {
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t c = 0; c < cols; ++c) v[c] *= inv;
        break;
      }
    }
  }
  return w;
}

NamedTensor to_named(const std::string& name, const ad::Tensor& t) {
  return NamedTensor{name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())};
}

// Order by similarity descending, then frame index ascending.
std::vector<std::size_t> ranking(std::span<const double> sims, std::size_t k) {
  std::vector<std::size_t> order(sims.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  };
  if (k >= order.size()) {
    std::sort(order.begin(), order.end(), better);
  } else {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      better);
    order.resize(k);
  }
  return order;
}

std::vector<double> video_similarities(const FrameVectorStore& store, const VideoFrames& video,
                                       std::span<const double> query_vector) {
  if (query_vector.size() != store.dim()) {
    throw DimensionError("query vector has dimension " + std::to_string(query_vector.size()) +
                         ", store has " + std::to_string(store.dim()));
  }
  std::vector<double> sims(video.num_frames());
  kernels::inner_products(video.values, store.dim(), query_vector, sims);
  return sims;
}

RetrievalResult make_result(const VideoFrames& video, std::span<const std::size_t> picks,
                            std::span<const double> sims, double temperature) {
  RetrievalResult out;
  out.video_id = video.video_id;
  std::vector<std::size_t> sorted(picks.begin(), picks.end());
  std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  std::vector<double> selected;
  for (auto i : sorted) selected.push_back(sims[i]);
  const auto scores = frame_scores(selected, temperature);
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    out.entries.push_back({sorted[j], selected[j], scores[j], video.timestamps[sorted[j]]});
  }
  return out;
}

void check_k(std::size_t k) {
  if (k == 0) throw ParameterError("k must be at least 1");
}

}  // namespace

RetrieverParams RetrieverParams::init(const RetrieverConfig& config, std::uint64_t seed) {
  if (config.vocab_size == 0 || config.embed_dim == 0 || config.feature_dim == 0) {
    throw ParameterError("retriever: vocabulary and dimensions must be positive");
  }
  if (config.retrieval_dim < config.feature_dim) {
    throw ParameterError("retriever: retrieval_dim must be >= feature_dim");
  }
  if (!(config.temperature > 0.0)) throw ParameterError("retriever: temperature must be positive");
  if (!(config.query_init_scale > 0.0)) {
    throw ParameterError("retriever: query_init_scale must be positive");
  }
  Rng rng(derive_seed(seed, {0x5245}));
  RetrieverParams p;
  p.config_ = config;
  p.query_embedding_ = ad::Tensor::from_data(
      {config.vocab_size, config.embed_dim},
      rng.normal_vector(config.vocab_size * config.embed_dim, config.query_init_scale), true);
  p.query_projection_ = ad::Tensor::from_data(
      {config.embed_dim, config.retrieval_dim},
      rng.normal_vector(config.embed_dim * config.retrieval_dim,
                        config.query_init_scale /
                            std::sqrt(static_cast<double>(config.embed_dim))),
      true);
  p.frame_projection_ = ad::Tensor::from_data(
      {config.feature_dim, config.retrieval_dim},
      semi_orthogonal(config.feature_dim, config.retrieval_dim, rng), false);
  return p;
}

RetrieverParams RetrieverParams::from_checkpoint(std::span<const NamedTensor> tensors) {
  const auto& emb = find_tensor(tensors, kQueryEmbedding);
  const auto& proj = find_tensor(tensors, kQueryProjection);
  const auto& frame = find_tensor(tensors, kFrameProjection);
  const auto& temp = find_tensor(tensors, kTemperature);
  if (emb.shape.size() != 2 || proj.shape.size() != 2 || frame.shape.size() != 2 ||
      emb.shape[1] != proj.shape[0] || frame.shape[1] != proj.shape[1] || temp.data.size() != 1) {
    throw LoadError("retriever checkpoint: inconsistent tensor shapes");
  }
  RetrieverParams p;
  p.config_.vocab_size = emb.shape[0];
  p.config_.embed_dim = emb.shape[1];
  p.config_.retrieval_dim = proj.shape[1];
  p.config_.feature_dim = frame.shape[0];
  p.config_.temperature = temp.data[0];
  if (!(p.config_.temperature > 0.0)) throw LoadError("retriever checkpoint: bad temperature");
  p.query_embedding_ = ad::Tensor::from_data(emb.shape, emb.data, true);
  p.query_projection_ = ad::Tensor::from_data(proj.shape, proj.data, true);
  p.frame_projection_ = ad::Tensor::from_data(frame.shape, frame.data, false);
  return p;
}

void RetrieverParams::set_query_trainable(bool on) {
  query_embedding_.set_requires_grad(on);
  query_projection_.set_requires_grad(on);
}

std::vector<ad::Tensor> RetrieverParams::trainable() const {
  if (!query_trainable()) return {};
  return {query_embedding_, query_projection_};
}

std::vector<NamedTensor> RetrieverParams::to_checkpoint() const {
  return {to_named(kQueryEmbedding, query_embedding_),
          to_named(kQueryProjection, query_projection_),
          to_named(kFrameProjection, frame_projection_),
          NamedTensor{kTemperature, {}, {config_.temperature}}};
}

std::vector<NamedTensor> RetrieverParams::frame_encoder_checkpoint() const {
  return {to_named(kFrameProjection, frame_projection_)};
}

void RetrieverParams::save(const std::filesystem::path& path) const {
  save_checkpoint(path, to_checkpoint());
}

RetrieverParams RetrieverParams::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

std::vector<double> encode_frame(std::span<const double> raw_features,
                                 const RetrieverParams& params) {
  const auto& cfg = params.config();
  if (raw_features.size() != cfg.feature_dim) {
    throw ParameterError("encode_frame: feature dimension " + std::to_string(raw_features.size()) +
                         ", encoder expects " + std::to_string(cfg.feature_dim));
  }
  std::vector<double> out(cfg.retrieval_dim);
  kernels::gemm_serial(kernels::Trans::kNo, kernels::Trans::kNo, 1, cfg.retrieval_dim,
                       cfg.feature_dim, raw_features, params.frame_projection().data(), out);
  double ss = 0.0;
  for (double x : out) ss += x * x;
  if (!(ss > 0.0)) throw ValidationError("encode_frame: zero frame vector has no direction");
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& x : out) x *= inv;
  return out;
}

ad::Tensor encode_query(std::span<const std::size_t> tokens, const RetrieverParams& params) {
  if (tokens.empty()) throw ParameterError("encode_query: empty token sequence");
  auto pooled = ad::mean_rows(ad::embedding(params.query_embedding(), tokens));
  return ad::l2_normalize_rows(ad::matmul(pooled, params.query_projection()));
}

double cosine_similarity(std::span<const double> q, std::span<const double> f) {
  if (q.size() != f.size()) {
    throw DimensionError("cosine_similarity: dimensions " + std::to_string(q.size()) + " and " +
                         std::to_string(f.size()));
  }
  double dot = 0.0, qq = 0.0, ff = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * f[i];
    qq += q[i] * q[i];
    ff += f[i] * f[i];
  }
  if (!(qq > 0.0) || !(ff > 0.0)) throw NumericDomainError("cosine_similarity: zero-norm vector");
  return dot / (std::sqrt(qq) * std::sqrt(ff));
}

std::vector<std::size_t> RetrievalResult::frame_indices() const {
  std::vector<std::size_t> out;
  for (const auto& e : entries) out.push_back(e.frame_index);
  return out;
}

std::vector<double> RetrievalResult::similarities() const {
  std::vector<double> out;
  for (const auto& e : entries) out.push_back(e.similarity);
  return out;
}

std::vector<double> RetrievalResult::scores() const {
  std::vector<double> out;
  for (const auto& e : entries) out.push_back(e.score);
  return out;
}

std::vector<double> frame_scores(std::span<const double> similarities, double temperature) {
  if (similarities.empty()) throw ParameterError("frame_scores: need at least one similarity");
  if (!(temperature > 0.0)) throw ParameterError("frame_scores: temperature must be positive");
  const double mx = *std::max_element(similarities.begin(), similarities.end());
  std::vector<double> out(similarities.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp((similarities[i] - mx) / temperature);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

std::vector<double> uniform_frame_scores(std::size_t k) {
  if (k == 0) throw ParameterError("uniform_frame_scores: k must be at least 1");
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

RetrievalResult retrieve_top_k(const FrameVectorStore& store, const std::string& video_id,
                               std::span<const double> query_vector, std::size_t k,
                               double temperature) {
  check_k(k);
  const auto& video = store.video(video_id);
  const auto sims = video_similarities(store, video, query_vector);
  const bool clamped = k > video.num_frames();
  const auto picks = ranking(sims, std::min(k, video.num_frames()));
  auto out = make_result(video, picks, sims, temperature);
  out.clamped = clamped;
  return out;
}

RetrievalResult annealed_top_k(const FrameVectorStore& store, const std::string& video_id,
                               std::span<const double> query_vector, std::size_t k,
                               std::size_t window, double temperature) {
  check_k(k);
  const auto& video = store.video(video_id);
  const auto n = video.num_frames();
  const auto sims = video_similarities(store, video, query_vector);
  const bool clamped = k > n;
  k = std::min(k, n);
  const auto order = ranking(sims, n);

  std::vector<bool> suppressed(n, false), taken(n, false);
  std::vector<std::size_t> picks;
  for (auto i : order) {
    if (picks.size() == k) break;
    if (suppressed[i]) continue;
    picks.push_back(i);
    taken[i] = true;
    const auto lo = i >= window ? i - window : 0;
    const auto hi = std::min(n - 1, i + window);
    for (auto j = lo; j <= hi; ++j) suppressed[j] = true;
  }
  bool fallback = false;
  for (auto i : order) {
    if (picks.size() == k) break;
    if (taken[i]) continue;
    picks.push_back(i);
    taken[i] = true;
    fallback = true;
  }
  auto out = make_result(video, picks, sims, temperature);
  out.clamped = clamped;
  out.fallback = fallback;
  return out;
}

RetrievalResult uniform_sample_frames_at(const FrameTable& videos, const std::string& video_id,
                                         std::size_t k, double phase) {
  check_k(k);
  const auto& video = videos.video(video_id);
  const auto n = video.num_frames();
  RetrievalResult out;
  out.video_id = video.video_id;
  out.clamped = k > n;
  k = std::min(k, n);
  const double stride = static_cast<double>(n) / static_cast<double>(k);
  if (phase < 0.0 || phase >= stride) {
    throw ParameterError("uniform_sample_frames: phase outside [0, frames / k)");
  }
  const auto scores = uniform_frame_scores(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double pos = phase + static_cast<double>(i * n) / static_cast<double>(k);
    auto idx = std::min(static_cast<std::size_t>(std::floor(pos)), n - 1);
    out.entries.push_back({idx, kNoSimilarity, scores[i], video.timestamps[idx]});
  }
  return out;
}

RetrievalResult uniform_sample_frames(const FrameTable& videos, const std::string& video_id,
                                      std::size_t k, std::uint64_t seed) {
  check_k(k);
  const auto n = videos.video(video_id).num_frames();
  const auto kk = std::min(k, n);
  const double stride = static_cast<double>(n) / static_cast<double>(kk);
  Rng rng(seed);
  double phase = rng.uniform(0.0, stride);
  if (phase >= stride) phase = 0.0;
  return uniform_sample_frames_at(videos, video_id, k, phase);
}

std::size_t anneal_schedule(const AnnealState& state, std::size_t epoch) {
  if (state.epochs == 0) throw ParameterError("anneal_schedule: epoch count must be positive");
  if (epoch >= state.epochs) {
    throw ParameterError("anneal_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                         std::to_string(state.epochs) + ")");
  }
  if (state.epochs == 1) return 0;
  const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(state.epochs - 1);
  return static_cast<std::size_t>(std::llround(static_cast<double>(state.initial_window) * frac));
}

FrameVectorStore build_index(const RawVideoSet& videos, const RetrieverParams& params) {
  const auto& cfg = params.config();
  if (!videos.empty() && videos.dim() != cfg.feature_dim) {
    throw DimensionError("build_index: raw features have dimension " +
                         std::to_string(videos.dim()) + ", frame encoder expects " +
                         std::to_string(cfg.feature_dim));
  }
  const auto raw = videos.videos();
  std::vector<VideoFrames> encoded(raw.size());
  std::vector<std::string> errors(raw.size());
  const auto count = static_cast<std::int64_t>(raw.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t vi = 0; vi < count; ++vi) {
    const auto& src = raw[static_cast<std::size_t>(vi)];
    auto& dst = encoded[static_cast<std::size_t>(vi)];
    dst.video_id = src.video_id;
    dst.timestamps = src.timestamps;
    dst.values.reserve(src.num_frames() * cfg.retrieval_dim);
    try {
      for (std::size_t f = 0; f < src.num_frames(); ++f) {
        const auto v = encode_frame(
            std::span<const double>(src.values).subspan(f * cfg.feature_dim, cfg.feature_dim),
            params);
        dst.values.insert(dst.values.end(), v.begin(), v.end());
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(vi)] = "video '" + src.video_id + "': " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw ValidationError("build_index: " + e);
  }
  FrameVectorStore store(cfg.retrieval_dim);
  for (auto& v : encoded) store.add(std::move(v));
  return store;
}

}  // namespace sevit
