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

#include "sevit/generator.hpp"

#include <cmath>

#include "sevit/error.hpp"
#include "sevit/ops.hpp"
#include "sevit/rng.hpp"
#include "sevit/vocab.hpp"

namespace sevit {
namespace {

using ad::Tensor;

Tensor randn(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  return Tensor::from_data({rows, cols}, rng.normal_vector(rows * cols, stddev), true);
}

Tensor zeros_row(std::size_t cols) { return Tensor::zeros({1, cols}, true); }

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor linear(const Tensor& x, const Tensor& w) { return ad::matmul(x, w); }

Tensor feed_forward(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                    const Tensor& b2) {
  return ad::add(ad::matmul(ad::relu(ad::add(ad::matmul(x, w1), b1)), w2), b2);
}

std::vector<std::uint8_t> key_visibility(std::size_t queries, std::span<const std::uint8_t> keys) {
  std::vector<std::uint8_t> allowed(queries * keys.size());
  for (std::size_t i = 0; i < queries; ++i)
    for (std::size_t j = 0; j < keys.size(); ++j) allowed[i * keys.size() + j] = keys[j];
  return allowed;
}

std::vector<std::uint8_t> causal_mask(std::size_t n) {
  std::vector<std::uint8_t> allowed(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) allowed[i * n + j] = 1;
  return allowed;
}

// Decoder input [BOS, w_1 .. w_{N-1}] for target [w_1 .. w_N].
std::vector<std::size_t> teacher_forcing_input(std::span<const std::size_t> target,
                                               const GeneratorParams& params) {
  if (target.empty()) throw ParameterError("target sequence is empty");
  if (target.back() != Vocabulary::kEos) throw ParameterError("target must end with EOS");
  if (target.size() > params.config.max_target_len) {
    throw ParameterError("target of " + std::to_string(target.size()) +
                         " tokens exceeds max_target_len " +
                         std::to_string(params.config.max_target_len));
  }
  std::vector<std::size_t> input{Vocabulary::kBos};
  input.insert(input.end(), target.begin(), target.end() - 1);
  return input;
}

std::vector<double> last_row_softmax(const Tensor& logits) {
  const auto rows = logits.rows(), cols = logits.cols();
  const double* row = logits.data().data() + (rows - 1) * cols;
  double mx = row[0];
  for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
  std::vector<double> p(cols);
  double z = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    p[c] = std::exp(row[c] - mx);
    z += p[c];
  }
  for (auto& x : p) x /= z;
  return p;
}

void check_pairs(std::span<const EncodedPair> pairs) {
  if (pairs.empty()) throw ContractError("fusion needs at least one encoded pair");
  for (const auto& p : pairs) {
    if (p.length() != pairs[0].length()) {
      throw ContractError("encoded pairs have different lengths " +
                          std::to_string(pairs[0].length()) + " and " +
                          std::to_string(p.length()));
    }
  }
}

void check_scores(std::size_t pairs, std::size_t scores) {
  if (pairs != scores) {
    throw ContractError("MAR: " + std::to_string(scores) + " frame scores for " +
                        std::to_string(pairs) + " pairs");
  }
}

}  // namespace

GeneratorParams GeneratorParams::init(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size < 4 || cfg.model_dim == 0 || cfg.ff_dim == 0 || cfg.feature_dim == 0 ||
      cfg.max_query_len == 0 || cfg.max_target_len == 0) {
    throw ParameterError("generator: invalid configuration");
  }
  Rng rng(derive_seed(seed, {0x47454e}));
  const auto d = cfg.model_dim, f = cfg.ff_dim;
  const double wd = fan_in_std(d), wf = fan_in_std(f);
  GeneratorParams p;
  p.config = cfg;
  p.token_embedding = randn(rng, cfg.vocab_size, d, cfg.embed_scale);
  p.frame_projection = randn(rng, cfg.feature_dim, d, cfg.frame_scale);
  p.frame_bias = zeros_row(d);
  p.encoder_position = randn(rng, cfg.pair_length(), d, 0.1);
  p.enc_wq = randn(rng, d, d, wd);
  p.enc_wk = randn(rng, d, d, wd);
  p.enc_wv = randn(rng, d, d, wd);
  p.enc_wo = randn(rng, d, d, 0.5 * wd);
  p.enc_ff1 = randn(rng, d, f, wd);
  p.enc_ff1_bias = zeros_row(f);
  p.enc_ff2 = randn(rng, f, d, 0.5 * wf);
  p.enc_ff2_bias = zeros_row(d);
  p.decoder_position = randn(rng, cfg.max_target_len, d, 0.1);
  p.dec_self_wq = randn(rng, d, d, wd);
  p.dec_self_wk = randn(rng, d, d, wd);
  p.dec_self_wv = randn(rng, d, d, wd);
  p.dec_self_wo = randn(rng, d, d, 0.5 * wd);
  p.dec_cross_wq = randn(rng, d, d, wd);
  p.dec_cross_wk = randn(rng, d, d, wd);
  p.dec_cross_wv = randn(rng, d, d, wd);
  p.dec_cross_wo = randn(rng, d, d, 0.5 * wd);
  p.dec_ff1 = randn(rng, d, f, wd);
  p.dec_ff1_bias = zeros_row(f);
  p.dec_ff2 = randn(rng, f, d, 0.5 * wf);
  p.dec_ff2_bias = zeros_row(d);
  p.output_projection = randn(rng, d, cfg.vocab_size, cfg.output_scale);
  p.output_bias = zeros_row(cfg.vocab_size);
  return p;
}

std::vector<std::pair<std::string, Tensor>> GeneratorParams::named() const {
  return {
      {"generator.token_embedding", token_embedding},
      {"generator.frame_projection", frame_projection},
      {"generator.frame_bias", frame_bias},
      {"generator.encoder_position", encoder_position},
      {"generator.enc_wq", enc_wq},
      {"generator.enc_wk", enc_wk},
      {"generator.enc_wv", enc_wv},
      {"generator.enc_wo", enc_wo},
      {"generator.enc_ff1", enc_ff1},
      {"generator.enc_ff1_bias", enc_ff1_bias},
      {"generator.enc_ff2", enc_ff2},
      {"generator.enc_ff2_bias", enc_ff2_bias},
      {"generator.decoder_position", decoder_position},
      {"generator.dec_self_wq", dec_self_wq},
      {"generator.dec_self_wk", dec_self_wk},
      {"generator.dec_self_wv", dec_self_wv},
      {"generator.dec_self_wo", dec_self_wo},
      {"generator.dec_cross_wq", dec_cross_wq},
      {"generator.dec_cross_wk", dec_cross_wk},
      {"generator.dec_cross_wv", dec_cross_wv},
      {"generator.dec_cross_wo", dec_cross_wo},
      {"generator.dec_ff1", dec_ff1},
      {"generator.dec_ff1_bias", dec_ff1_bias},
      {"generator.dec_ff2", dec_ff2},
      {"generator.dec_ff2_bias", dec_ff2_bias},
      {"generator.output_projection", output_projection},
      {"generator.output_bias", output_bias},
  };
}

std::vector<Tensor> GeneratorParams::trainable() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) {
    if (t.requires_grad()) out.push_back(t);
  }
  return out;
}

std::vector<NamedTensor> GeneratorParams::to_checkpoint() const {
  std::vector<NamedTensor> out;
  auto scalar = [&](const char* name, double v) { out.push_back({name, {}, {v}}); };
  scalar("arch.vocab_size", static_cast<double>(config.vocab_size));
  scalar("arch.model_dim", static_cast<double>(config.model_dim));
  scalar("arch.ff_dim", static_cast<double>(config.ff_dim));
  scalar("arch.feature_dim", static_cast<double>(config.feature_dim));
  scalar("arch.max_query_len", static_cast<double>(config.max_query_len));
  scalar("arch.max_target_len", static_cast<double>(config.max_target_len));
  scalar("arch.encoder_blocks", 1.0);
  scalar("arch.decoder_blocks", 1.0);
  for (auto& [name, t] : named()) {
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
  return out;
}

GeneratorParams GeneratorParams::from_checkpoint(std::span<const NamedTensor> tensors) {
  auto scalar = [&](const char* name) {
    const auto& t = find_tensor(tensors, name);
    if (t.data.size() != 1) throw LoadError(std::string("manifest entry ") + name + " is not a scalar");
    return static_cast<std::size_t>(t.data[0]);
  };
  GeneratorConfig cfg;
  cfg.vocab_size = scalar("arch.vocab_size");
  cfg.model_dim = scalar("arch.model_dim");
  cfg.ff_dim = scalar("arch.ff_dim");
  cfg.feature_dim = scalar("arch.feature_dim");
  cfg.max_query_len = scalar("arch.max_query_len");
  cfg.max_target_len = scalar("arch.max_target_len");
  if (scalar("arch.encoder_blocks") != 1 || scalar("arch.decoder_blocks") != 1) {
    throw LoadError("generator checkpoint: only one encoder and one decoder block are supported");
  }
  // Shapes come from a freshly initialized model; values from the file.
  GeneratorParams p = init(cfg, 0);
  for (auto& [name, t] : p.named()) {
    const auto& rec = find_tensor(tensors, name);
    if (rec.shape != t.shape()) {
      throw LoadError("generator checkpoint: '" + name + "' has shape " +
                      ad::shape_string(rec.shape) + ", manifest implies " +
                      ad::shape_string(t.shape()));
    }
    std::copy(rec.data.begin(), rec.data.end(), t.mutable_data().begin());
  }
  return p;
}

void GeneratorParams::save(const std::filesystem::path& path) const {
  save_checkpoint(path, to_checkpoint());
}

GeneratorParams GeneratorParams::load(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

EncodedPair encode_pair(std::span<const double> frame_features,
                        std::span<const std::size_t> query_tokens, const GeneratorParams& p) {
  const auto& cfg = p.config;
  if (frame_features.size() != cfg.feature_dim) {
    throw DimensionError("encode_pair: frame features of dimension " +
                         std::to_string(frame_features.size()) + ", expected " +
                         std::to_string(cfg.feature_dim));
  }
  EncodedPair out;
  out.truncated = query_tokens.size() > cfg.max_query_len;
  const auto used = std::min(query_tokens.size(), cfg.max_query_len);
  std::vector<std::size_t> padded(cfg.max_query_len, Vocabulary::kPad);
  std::copy_n(query_tokens.begin(), used, padded.begin());
  out.key_mask.assign(cfg.pair_length(), 0);
  out.key_mask[0] = 1;
  for (std::size_t i = 0; i < used; ++i) out.key_mask[1 + i] = 1;

  const auto frame = Tensor::row(std::vector<double>(frame_features.begin(), frame_features.end()));
  const Tensor parts[] = {ad::add(ad::matmul(frame, p.frame_projection), p.frame_bias),
                          ad::embedding(p.token_embedding, padded)};
  auto x = ad::add(ad::concat_rows(parts), p.encoder_position);

  const auto allowed = key_visibility(cfg.pair_length(), out.key_mask);
  auto attn = ad::attention(linear(x, p.enc_wq), linear(x, p.enc_wk), linear(x, p.enc_wv), allowed);
  auto h = ad::add(x, linear(attn, p.enc_wo));
  out.states =
      ad::add(h, feed_forward(h, p.enc_ff1, p.enc_ff1_bias, p.enc_ff2, p.enc_ff2_bias));
  return out;
}

Tensor decoder_logits(const Tensor& memory, std::span<const std::uint8_t> memory_mask,
                      std::span<const std::size_t> prefix, const GeneratorParams& p) {
  const auto& cfg = p.config;
  if (prefix.empty()) throw ParameterError("decoder prefix must contain at least BOS");
  if (prefix.size() > cfg.max_target_len) {
    throw ParameterError("decoder prefix of " + std::to_string(prefix.size()) +
                         " tokens exceeds max_target_len " + std::to_string(cfg.max_target_len));
  }
  if (memory_mask.size() != memory.rows()) {
    throw DimensionError("decoder memory mask has " + std::to_string(memory_mask.size()) +
                         " entries for " + std::to_string(memory.rows()) + " rows");
  }
  const auto t = prefix.size();
  auto y = ad::add(ad::embedding(p.token_embedding, prefix),
                   ad::slice_rows(p.decoder_position, 0, t));
  const auto causal = causal_mask(t);
  auto self = ad::attention(linear(y, p.dec_self_wq), linear(y, p.dec_self_wk),
                            linear(y, p.dec_self_wv), causal);
  y = ad::add(y, linear(self, p.dec_self_wo));
  const auto visible = key_visibility(t, memory_mask);
  auto cross = ad::attention(linear(y, p.dec_cross_wq), linear(memory, p.dec_cross_wk),
                             linear(memory, p.dec_cross_wv), visible);
  y = ad::add(y, linear(cross, p.dec_cross_wo));
  y = ad::add(y, feed_forward(y, p.dec_ff1, p.dec_ff1_bias, p.dec_ff2, p.dec_ff2_bias));
  return ad::add(ad::matmul(y, p.output_projection), p.output_bias);
}

std::vector<double> decode_step_single(const EncodedPair& pair,
                                       std::span<const std::size_t> prefix,
                                       const GeneratorParams& params) {
  return last_row_softmax(decoder_logits(pair.states, pair.key_mask, prefix, params));
}

FusionOutput mar_step(std::span<const EncodedPair> pairs, std::span<const double> scores,
                      std::span<const std::size_t> prefix, const GeneratorParams& params) {
  check_pairs(pairs);
  check_scores(pairs.size(), scores.size());
  double total = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0)) throw ContractError("MAR: frame scores must be non-negative");
    total += s;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("MAR: frame scores must sum to 1");
  FusionOutput out;
  out.mode = FusionMode::kMar;
  out.scores.assign(scores.begin(), scores.end());
  out.distribution.assign(params.config.vocab_size, 0.0);
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    out.per_frame.push_back(decode_step_single(pairs[j], prefix, params));
    for (std::size_t v = 0; v < out.distribution.size(); ++v) {
      out.distribution[v] += scores[j] * out.per_frame.back()[v];
    }
  }
  return out;
}

Tensor mar_sequence_logprob(std::span<const EncodedPair> pairs, const Tensor& scores,
                            std::span<const std::size_t> target, const GeneratorParams& params) {
  check_pairs(pairs);
  check_scores(pairs.size(), scores.size());
  const auto input = teacher_forcing_input(target, params);
  std::vector<Tensor> rows;
  rows.reserve(pairs.size());
  for (const auto& pair : pairs) {
    auto logp = ad::log_softmax(decoder_logits(pair.states, pair.key_mask, input, params));
    rows.push_back(ad::pick(logp, target));
  }
  // Per token i: log sum_j exp(log s_j + log p_j(w_i)), in log space so tiny
  // probabilities do not underflow.
  const auto score_row = scores.rank() == 2 ? scores : ad::concat_rows(std::span(&scores, 1));
  auto joint = ad::add(ad::transpose(ad::concat_rows(rows)), ad::log(score_row));
  return ad::sum(ad::logsumexp_rows(joint));
}

Tensor mar_sequence_logprob(std::span<const EncodedPair> pairs, std::span<const double> scores,
                            std::span<const std::size_t> target, const GeneratorParams& params) {
  return mar_sequence_logprob(pairs, Tensor::row(std::vector<double>(scores.begin(), scores.end())),
                              target, params);
}

EncodedPair fid_concatenate(std::span<const EncodedPair> pairs) {
  check_pairs(pairs);
  std::vector<Tensor> blocks;
  EncodedPair out;
  for (const auto& p : pairs) {
    blocks.push_back(p.states);
    out.key_mask.insert(out.key_mask.end(), p.key_mask.begin(), p.key_mask.end());
    out.truncated = out.truncated || p.truncated;
  }
  out.states = ad::concat_rows(blocks);
  return out;
}

FusionOutput fid_step(std::span<const EncodedPair> pairs, std::span<const std::size_t> prefix,
                      const GeneratorParams& params) {
  const auto joint = fid_concatenate(pairs);
  FusionOutput out;
  out.mode = FusionMode::kFid;
  out.distribution = last_row_softmax(decoder_logits(joint.states, joint.key_mask, prefix, params));
  return out;
}

Tensor fid_sequence_logprob(std::span<const EncodedPair> pairs,
                            std::span<const std::size_t> target, const GeneratorParams& params) {
  const auto joint = fid_concatenate(pairs);
  return seq2seq_logprob(joint, target, params);
}

Tensor seq2seq_logprob(const EncodedPair& pair, std::span<const std::size_t> target,
                       const GeneratorParams& params) {
  const auto input = teacher_forcing_input(target, params);
  auto logits = decoder_logits(pair.states, pair.key_mask, input, params);
  return ad::scale(ad::cross_entropy_nll(logits, target), -1.0);
}

std::vector<std::size_t> greedy_generate(std::span<const EncodedPair> pairs,
                                         std::span<const double> scores, FusionMode mode,
                                         const GeneratorParams& params, std::size_t max_len) {
  if (max_len == 0) throw ParameterError("greedy_generate: max_len must be at least 1");
  max_len = std::min(max_len, params.config.max_target_len);
  std::vector<std::size_t> prefix{Vocabulary::kBos};
  std::vector<std::size_t> out;
  while (out.size() < max_len) {
    const auto fused = mode == FusionMode::kMar ? mar_step(pairs, scores, prefix, params)
                                                : fid_step(pairs, prefix, params);
    std::size_t best = 0;
    for (std::size_t v = 1; v < fused.distribution.size(); ++v) {
      if (fused.distribution[v] > fused.distribution[best]) best = v;
    }
    out.push_back(best);
    if (best == Vocabulary::kEos) break;
    prefix.push_back(best);
  }
  return out;
}

}  // namespace sevit
