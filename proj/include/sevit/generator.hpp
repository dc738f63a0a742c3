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
#include <utility>
#include <vector>

#include "sevit/checkpoint.hpp"
#include "sevit/tensor.hpp"

namespace sevit {

struct GeneratorConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t feature_dim = 32;
  std::size_t max_query_len = 8;   // L_q; queries are padded to this length
  std::size_t max_target_len = 4;  // decoder positions, BOS included
  double embed_scale = 0.5;
  double frame_scale = 2.0;
  double output_scale = 0.02;

  // One frame slot followed by the padded query slots.
  std::size_t pair_length() const { return 1 + max_query_len; }
  bool operator==(const GeneratorConfig&) const = default;
};

// Toy encoder-decoder: one self-attention encoder block over
// [frame slot | query tokens], one decoder block with causal self-attention
// and cross-attention, all single-head, no layer norm.
struct GeneratorParams {
  GeneratorConfig config;

  ad::Tensor token_embedding;   // vocab x d, shared by encoder and decoder
  ad::Tensor frame_projection;  // d_f x d
  ad::Tensor frame_bias;        // 1 x d
  ad::Tensor encoder_position;  // pair_length x d

  ad::Tensor enc_wq, enc_wk, enc_wv, enc_wo;
  ad::Tensor enc_ff1, enc_ff1_bias, enc_ff2, enc_ff2_bias;

  ad::Tensor decoder_position;  // max_target_len x d
  ad::Tensor dec_self_wq, dec_self_wk, dec_self_wv, dec_self_wo;
  ad::Tensor dec_cross_wq, dec_cross_wk, dec_cross_wv, dec_cross_wo;
  ad::Tensor dec_ff1, dec_ff1_bias, dec_ff2, dec_ff2_bias;

  ad::Tensor output_projection;  // d x vocab
  ad::Tensor output_bias;        // 1 x vocab

  static GeneratorParams init(const GeneratorConfig& config, std::uint64_t seed);
  static GeneratorParams from_checkpoint(std::span<const NamedTensor> tensors);

  std::vector<std::pair<std::string, ad::Tensor>> named() const;
  std::vector<ad::Tensor> trainable() const;

  // Weights plus "arch.*" manifest records.
  std::vector<NamedTensor> to_checkpoint() const;
  void save(const std::filesystem::path& path) const;
  static GeneratorParams load(const std::filesystem::path& path);
};

// Encoder output for one (frame, query) pair.
struct EncodedPair {
  ad::Tensor states;                  // L x d, frame slot first
  std::vector<std::uint8_t> key_mask;  // 1 for real slots, 0 for padding
  bool truncated = false;             // query was cut to max_query_len

  std::size_t length() const { return key_mask.size(); }
};

EncodedPair encode_pair(std::span<const double> frame_features,
                        std::span<const std::size_t> query_tokens, const GeneratorParams& params);

// Decoder logits (prefix_len x vocab) attending over `memory`.
ad::Tensor decoder_logits(const ad::Tensor& memory, std::span<const std::uint8_t> memory_mask,
                          std::span<const std::size_t> prefix, const GeneratorParams& params);

// Next-token distribution after `prefix` (which starts with BOS).
std::vector<double> decode_step_single(const EncodedPair& pair,
                                       std::span<const std::size_t> prefix,
                                       const GeneratorParams& params);

enum class FusionMode { kMar, kFid };

struct FusionOutput {
  FusionMode mode = FusionMode::kMar;
  std::vector<double> distribution;               // fused next-token distribution
  std::vector<std::vector<double>> per_frame;     // MAR only
  std::vector<double> scores;                     // MAR only
};

// Score-weighted mixture of the per-pair next-token distributions.
FusionOutput mar_step(std::span<const EncodedPair> pairs, std::span<const double> scores,
                      std::span<const std::size_t> prefix, const GeneratorParams& params);

// Token-level marginal log-likelihood sum_i log sum_j s_j p(w_i | q, f_j, w_<i).
// `scores` is a 1 x k tensor so gradients can reach the retriever.
ad::Tensor mar_sequence_logprob(std::span<const EncodedPair> pairs, const ad::Tensor& scores,
                                std::span<const std::size_t> target, const GeneratorParams& params);
ad::Tensor mar_sequence_logprob(std::span<const EncodedPair> pairs, std::span<const double> scores,
                                std::span<const std::size_t> target, const GeneratorParams& params);

// k pairs as one (k * L) x d sequence, blocks in the given order.
EncodedPair fid_concatenate(std::span<const EncodedPair> pairs);

FusionOutput fid_step(std::span<const EncodedPair> pairs, std::span<const std::size_t> prefix,
                      const GeneratorParams& params);

ad::Tensor fid_sequence_logprob(std::span<const EncodedPair> pairs,
                                std::span<const std::size_t> target, const GeneratorParams& params);

// Plain single-pair seq2seq log-likelihood.
ad::Tensor seq2seq_logprob(const EncodedPair& pair, std::span<const std::size_t> target,
                           const GeneratorParams& params);

// Argmax decoding (ties to the lowest id) until EOS or max_len tokens.
std::vector<std::size_t> greedy_generate(std::span<const EncodedPair> pairs,
                                         std::span<const double> scores, FusionMode mode,
                                         const GeneratorParams& params, std::size_t max_len);

}  // namespace sevit
