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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <vector>

#include "sevit/error.hpp"
#include "sevit/generator.hpp"
#include "sevit/ops.hpp"
#include "sevit/vocab.hpp"
#include "test_support.hpp"

namespace {

using namespace sevit;
using sevit::testing::check_gradients;
using sevit::testing::random_values;
using sevit::testing::TempDir;

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.vocab_size = 9;
  cfg.model_dim = 6;
  cfg.ff_dim = 8;
  cfg.feature_dim = 4;
  cfg.max_query_len = 3;
  cfg.max_target_len = 3;
  return cfg;
}

// Init with larger output weights so distributions are far from uniform and
// comparisons are not trivially satisfied.
GeneratorParams tiny_params(std::uint64_t seed = 1) {
  auto p = GeneratorParams::init(tiny_config(), seed);
  for (auto& v : p.output_projection.mutable_data()) v *= 20.0;
  return p;
}

std::vector<EncodedPair> make_pairs(const GeneratorParams& p, std::size_t k, std::uint64_t seed,
                                    std::vector<std::size_t> query = {4, 5}) {
  std::mt19937_64 rng(seed);
  std::vector<EncodedPair> pairs;
  for (std::size_t j = 0; j < k; ++j) {
    pairs.push_back(encode_pair(random_values(rng, p.config.feature_dim), query, p));
  }
  return pairs;
}

const std::vector<std::size_t> kTarget{6, 7, Vocabulary::kEos};

double sum_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Plain-loop matrices for the decoder oracle.
using Mat = std::vector<std::vector<double>>;

Mat to_mat(const ad::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < b.size(); ++p)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][p] * b[p][j];
  return c;
}

Mat plus(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[b.size() == 1 ? 0 : i][j];
  return a;
}

Mat attend(const Mat& q, const Mat& k, const Mat& v, const std::vector<std::vector<bool>>& vis) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
  Mat out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> w(k.size(), 0.0);
    double mx = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      if (!vis[i][j]) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < q[i].size(); ++c) s += q[i][c] * k[j][c];
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
      w[j] = vis[i][j] ? std::exp(w[j] - mx) : 0.0;
      z += w[j];
    }
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += w[j] / z * v[j][c];
  }
  return out;
}

Mat ffn(const Mat& x, const GeneratorParams& p) {
  Mat h = plus(mm(x, to_mat(p.dec_ff1)), to_mat(p.dec_ff1_bias));
  for (auto& row : h)
    for (auto& v : row) v = std::max(v, 0.0);
  return plus(mm(h, to_mat(p.dec_ff2)), to_mat(p.dec_ff2_bias));
}

std::vector<double> oracle_next_token(const EncodedPair& pair, const std::vector<std::size_t>& prefix,
                                      const GeneratorParams& p) {
  const auto emb = to_mat(p.token_embedding);
  const auto pos = to_mat(p.decoder_position);
  Mat y;
  for (std::size_t t = 0; t < prefix.size(); ++t) {
    y.push_back(emb[prefix[t]]);
    for (std::size_t c = 0; c < y[t].size(); ++c) y[t][c] += pos[t][c];
  }
  std::vector<std::vector<bool>> causal(prefix.size(), std::vector<bool>(prefix.size()));
  for (std::size_t i = 0; i < prefix.size(); ++i)
    for (std::size_t j = 0; j < prefix.size(); ++j) causal[i][j] = j <= i;
  y = plus(y, mm(attend(mm(y, to_mat(p.dec_self_wq)), mm(y, to_mat(p.dec_self_wk)),
                        mm(y, to_mat(p.dec_self_wv)), causal),
                 to_mat(p.dec_self_wo)));
  const auto mem = to_mat(pair.states);
  std::vector<std::vector<bool>> vis(prefix.size(), std::vector<bool>(mem.size()));
  for (std::size_t i = 0; i < prefix.size(); ++i)
    for (std::size_t j = 0; j < mem.size(); ++j) vis[i][j] = pair.key_mask[j] != 0;
  y = plus(y, mm(attend(mm(y, to_mat(p.dec_cross_wq)), mm(mem, to_mat(p.dec_cross_wk)),
                        mm(mem, to_mat(p.dec_cross_wv)), vis),
                 to_mat(p.dec_cross_wo)));
  y = plus(y, ffn(y, p));
  const auto logits = plus(mm(y, to_mat(p.output_projection)), to_mat(p.output_bias)).back();
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double z = 0.0;
  for (std::size_t v = 0; v < logits.size(); ++v) z += (out[v] = std::exp(logits[v] - mx));
  for (auto& v : out) v /= z;
  return out;
}

TEST(EncodePair, DeterministicAndShaped) {
  const auto p = tiny_params();
  const auto a = make_pairs(p, 1, 3)[0];
  const auto b = make_pairs(p, 1, 3)[0];
  EXPECT_EQ(a.states.shape(), (ad::Shape{4, 6}));
  EXPECT_EQ(a.key_mask, (std::vector<std::uint8_t>{1, 1, 1, 0}));
  EXPECT_EQ(std::memcmp(a.states.data().data(), b.states.data().data(),
                        a.states.size() * sizeof(double)),
            0);
  EXPECT_FALSE(a.truncated);
}

TEST(EncodePair, FrameChangesFrameSlot) {
  const auto p = tiny_params();
  const std::vector<std::size_t> q{4, 5};
  const auto a = encode_pair(std::vector<double>{1, 0, 0, 0}, q, p);
  const auto b = encode_pair(std::vector<double>{0, 1, 0, 0}, q, p);
  double diff = 0.0;
  for (std::size_t c = 0; c < 6; ++c) diff += std::abs(a.states.at(0, c) - b.states.at(0, c));
  EXPECT_GT(diff, 1e-6);
}

TEST(EncodePair, OverlongQueryTruncated) {
  const auto p = tiny_params();
  const std::vector<std::size_t> q{4, 5, 6, 7, 8};
  const auto pair = encode_pair(std::vector<double>{1, 2, 3, 4}, q, p);
  EXPECT_TRUE(pair.truncated);
  EXPECT_EQ(pair.length(), p.config.pair_length());
  EXPECT_THROW((void)encode_pair(std::vector<double>{1, 2, 3}, q, p), DimensionError);
}

TEST(EncodePair, FrameProjectionJacobian) {
  auto p = tiny_params(2);
  std::mt19937_64 rng(8);
  const auto frame = random_values(rng, 4);
  const auto w = ad::Tensor::from_data({4, 6}, random_values(rng, 24));
  const std::vector<std::size_t> q{4, 5};
  const auto report = check_gradients(
      [&] { return ad::sum(ad::mul(encode_pair(frame, q, p).states, w)); },
      {{"frame_projection", p.frame_projection}, {"frame_bias", p.frame_bias}});
  EXPECT_LE(report.max_rel, 1e-4) << report.worst;
}

TEST(DecodeStep, SumsToOneAndMatchesOracle) {
  const auto p = tiny_params(5);
  const auto pair = make_pairs(p, 1, 9)[0];
  const std::vector<std::size_t> prefix{Vocabulary::kBos, 6};
  const auto dist = decode_step_single(pair, prefix, p);
  EXPECT_NEAR(sum_of(dist), 1.0, 1e-9);
  const auto oracle = oracle_next_token(pair, prefix, p);
  for (std::size_t v = 0; v < dist.size(); ++v) EXPECT_NEAR(dist[v], oracle[v], 1e-10);
}

TEST(DecodeStep, Causal) {
  const auto p = tiny_params(6);
  const auto pair = make_pairs(p, 1, 2)[0];
  const std::vector<std::size_t> a{Vocabulary::kBos, 6, 7}, b{Vocabulary::kBos, 6, 8};
  const auto la = decoder_logits(pair.states, pair.key_mask, a, p);
  const auto lb = decoder_logits(pair.states, pair.key_mask, b, p);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < la.cols(); ++c) EXPECT_EQ(la.at(r, c), lb.at(r, c));
  const std::vector<std::size_t> bad{Vocabulary::kBos, 99};
  EXPECT_THROW((void)decode_step_single(pair, bad, p), IndexError);
}

TEST(MarStep, Reductions) {
  const auto p = tiny_params(7);
  const auto pairs = make_pairs(p, 3, 4);
  const std::vector<std::size_t> prefix{Vocabulary::kBos};
  const std::vector<double> one{1.0};
  const auto single = mar_step(std::span(pairs).first(1), one, prefix, p);
  EXPECT_EQ(single.distribution, decode_step_single(pairs[0], prefix, p));

  const std::vector<EncodedPair> same{pairs[1], pairs[1], pairs[1]};
  const auto mixed = mar_step(same, std::vector<double>{0.2, 0.5, 0.3}, prefix, p);
  const auto base = decode_step_single(pairs[1], prefix, p);
  for (std::size_t v = 0; v < base.size(); ++v) EXPECT_NEAR(mixed.distribution[v], base[v], 1e-15);

  const std::vector<double> scores{0.1, 0.6, 0.3};
  const auto out = mar_step(pairs, scores, prefix, p);
  EXPECT_NEAR(sum_of(out.distribution), 1.0, 1e-9);
  for (std::size_t v = 0; v < out.distribution.size(); ++v) {
    double expected = 0.0;
    for (std::size_t j = 0; j < 3; ++j) expected += scores[j] * out.per_frame[j][v];
    EXPECT_NEAR(out.distribution[v], expected, 1e-15);
  }
  EXPECT_THROW((void)mar_step(pairs, std::vector<double>{0.5, 0.5}, prefix, p), ContractError);
}

TEST(MarStep, HandMixture) {
  const double mix = 0.73106 * 0.9 + 0.26894 * 0.1;
  EXPECT_NEAR(mix, 0.68485, 1e-4);
}

TEST(MarSequence, SingleFrameEqualsSeq2Seq) {
  const auto p = tiny_params(8);
  const auto pairs = make_pairs(p, 1, 5);
  const double mar = mar_sequence_logprob(pairs, std::vector<double>{1.0}, kTarget, p).item();
  const double fid = fid_sequence_logprob(pairs, kTarget, p).item();
  const double s2s = seq2seq_logprob(pairs[0], kTarget, p).item();
  EXPECT_NEAR(mar, s2s, 1e-12);
  EXPECT_NEAR(fid, s2s, 1e-12);
}

TEST(MarSequence, EqualFramesReduceToSingle) {
  const auto p = tiny_params(9);
  const auto one = make_pairs(p, 1, 6);
  const std::vector<EncodedPair> same{one[0], one[0], one[0], one[0]};
  const double mar =
      mar_sequence_logprob(same, std::vector<double>{0.25, 0.25, 0.25, 0.25}, kTarget, p).item();
  EXPECT_NEAR(mar, seq2seq_logprob(one[0], kTarget, p).item(), 1e-12);
}

TEST(MarSequence, MatchesExhaustiveEnumeration) {
  const auto p = tiny_params(10);
  const auto pairs = make_pairs(p, 2, 7);
  const std::vector<double> scores{0.7, 0.3};
  const std::vector<std::size_t> target{6, Vocabulary::kEos};
  double expected = 0.0;
  std::vector<std::size_t> prefix{Vocabulary::kBos};
  for (auto w : target) {
    double step = 0.0;
    for (std::size_t j = 0; j < 2; ++j) step += scores[j] * decode_step_single(pairs[j], prefix, p)[w];
    expected += std::log(step);
    prefix.push_back(w);
  }
  EXPECT_NEAR(mar_sequence_logprob(pairs, scores, target, p).item(), expected, 1e-10);
}

TEST(MarSequence, JointPermutationInvariant) {
  const auto p = tiny_params(11);
  const auto pairs = make_pairs(p, 3, 8);
  const std::vector<EncodedPair> perm{pairs[2], pairs[0], pairs[1]};
  const double a = mar_sequence_logprob(pairs, std::vector<double>{0.2, 0.5, 0.3}, kTarget, p).item();
  const double b = mar_sequence_logprob(perm, std::vector<double>{0.3, 0.2, 0.5}, kTarget, p).item();
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(MarSequence, TargetContract) {
  const auto p = tiny_params();
  const auto pairs = make_pairs(p, 1, 1);
  EXPECT_THROW((void)mar_sequence_logprob(pairs, std::vector<double>{1.0}, {}, p), ParameterError);
  const std::vector<std::size_t> no_eos{6, 7};
  EXPECT_THROW((void)mar_sequence_logprob(pairs, std::vector<double>{1.0}, no_eos, p),
               ParameterError);
}

TEST(MarSequence, GradientReachesScores) {
  const auto p = tiny_params(12);
  const auto pairs = make_pairs(p, 3, 9);
  auto sims = ad::Tensor::from_data({1, 3}, {0.3, -0.1, 0.2}, true);
  ad::Tape tape;
  ad::TapeScope scope(tape);
  ad::backward(mar_sequence_logprob(pairs, ad::softmax(sims), kTarget, p));
  double norm = 0.0;
  for (double g : sims.grad()) norm += g * g;
  EXPECT_GT(norm, 1e-12);
}

TEST(Fid, ConcatenationLayout) {
  const auto p = tiny_params();
  std::vector<EncodedPair> fake;
  std::mt19937_64 rng(1);
  for (int j = 0; j < 3; ++j) {
    EncodedPair e;
    e.states = ad::Tensor::from_data({4, 8}, random_values(rng, 32));
    e.key_mask = {1, 1, 0, static_cast<std::uint8_t>(j % 2)};
    fake.push_back(e);
  }
  const auto joint = fid_concatenate(fake);
  EXPECT_EQ(joint.states.shape(), (ad::Shape{12, 8}));
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 32; ++i) EXPECT_EQ(joint.states.at(j * 32 + i), fake[j].states.at(i));
  EXPECT_EQ(joint.key_mask.size(), 12u);

  const auto single = fid_concatenate(std::span(fake).first(1));
  EXPECT_EQ(single.states.shape(), fake[0].states.shape());

  std::vector<EncodedPair> swapped{fake[1], fake[0], fake[2]};
  const auto sw = fid_concatenate(swapped);
  for (std::size_t i = 0; i < 32; ++i) {
    EXPECT_EQ(sw.states.at(i), fake[1].states.at(i));
    EXPECT_EQ(sw.states.at(32 + i), fake[0].states.at(i));
  }

  fake[2].states = ad::Tensor::zeros({5, 8});
  fake[2].key_mask.assign(5, 1);
  EXPECT_THROW((void)fid_concatenate(fake), ContractError);
}

TEST(Fid, DuplicatedPairMatchesSingle) {
  const auto p = tiny_params(13);
  const auto pair = make_pairs(p, 1, 10)[0];
  const std::vector<EncodedPair> dup{pair, pair, pair};
  const std::vector<std::size_t> prefix{Vocabulary::kBos};
  const auto a = fid_step(dup, prefix, p).distribution;
  const auto b = decode_step_single(pair, prefix, p);
  for (std::size_t v = 0; v < a.size(); ++v) EXPECT_NEAR(a[v], b[v], 1e-12);
}

TEST(Fid, BlockPermutationInvariant) {
  const auto p = tiny_params(14);
  const auto pairs = make_pairs(p, 3, 11);
  const std::vector<EncodedPair> perm{pairs[1], pairs[2], pairs[0]};
  EXPECT_NEAR(fid_sequence_logprob(pairs, kTarget, p).item(),
              fid_sequence_logprob(perm, kTarget, p).item(), 1e-12);
}

TEST(Fid, GradientsMatchFiniteDifferences) {
  auto p = GeneratorParams::init(tiny_config(), 15);
  std::mt19937_64 rng(3);
  std::vector<std::vector<double>> frames;
  for (int j = 0; j < 2; ++j) frames.push_back(random_values(rng, 4));
  const std::vector<std::size_t> q{4, 5};
  auto loss = [&] {
    std::vector<EncodedPair> pairs;
    for (const auto& f : frames) pairs.push_back(encode_pair(f, q, p));
    return ad::scale(fid_sequence_logprob(pairs, kTarget, p), -1.0);
  };
  const auto report = check_gradients(loss, p.named());
  EXPECT_LE(report.max_rel, 1e-4) << report.worst;
  EXPECT_GT(report.checked, 300u);
}

// All decoder weights zeroed except positions and the output map, so step t
// emits seq[t] with near-certainty.
TEST(Greedy, ForcedChannel) {
  auto p = GeneratorParams::init(tiny_config(), 16);
  const std::vector<std::size_t> seq{5, 8, Vocabulary::kEos};
  for (auto* t : {&p.token_embedding, &p.dec_self_wo, &p.dec_cross_wo, &p.dec_ff2,
                  &p.dec_ff2_bias, &p.output_bias}) {
    for (auto& v : t->mutable_data()) v = 0.0;
  }
  auto pos = p.decoder_position.mutable_data();
  std::fill(pos.begin(), pos.end(), 0.0);
  auto out = p.output_projection.mutable_data();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    pos[t * 6 + t] = 1.0;
    out[t * 9 + seq[t]] = 50.0;
  }
  const auto pairs = make_pairs(p, 2, 1);
  const std::vector<double> scores{0.5, 0.5};
  EXPECT_EQ(greedy_generate(pairs, scores, FusionMode::kMar, p, 3), seq);
  EXPECT_EQ(greedy_generate(pairs, scores, FusionMode::kFid, p, 3), seq);
  EXPECT_EQ(greedy_generate(pairs, scores, FusionMode::kMar, p, 1), (std::vector<std::size_t>{5}));
  EXPECT_THROW((void)greedy_generate(pairs, scores, FusionMode::kMar, p, 0), ParameterError);
}

TEST(Greedy, Deterministic) {
  const auto p = tiny_params(17);
  const auto pairs = make_pairs(p, 3, 12);
  const std::vector<double> scores{0.2, 0.3, 0.5};
  EXPECT_EQ(greedy_generate(pairs, scores, FusionMode::kMar, p, 3),
            greedy_generate(pairs, scores, FusionMode::kMar, p, 3));
}

TEST(GeneratorParams, CheckpointRoundTrip) {
  const auto p = tiny_params(18);
  TempDir dir;
  p.save(dir / "generator.sevt");
  const auto loaded = GeneratorParams::load(dir / "generator.sevt");
  EXPECT_EQ(loaded.config, p.config);
  EXPECT_EQ(encode_checkpoint(loaded.to_checkpoint()), encode_checkpoint(p.to_checkpoint()));
  const auto pairs = make_pairs(p, 2, 3);
  EXPECT_EQ(mar_sequence_logprob(pairs, std::vector<double>{0.4, 0.6}, kTarget, p).item(),
            mar_sequence_logprob(pairs, std::vector<double>{0.4, 0.6}, kTarget, loaded).item());
}

TEST(GeneratorParams, InitialLossNearUniform) {
  GeneratorConfig cfg;
  cfg.vocab_size = 40;
  const auto p = GeneratorParams::init(cfg, 19);
  std::mt19937_64 rng(2);
  double nll = 0.0;
  std::size_t tokens = 0;
  for (int e = 0; e < 50; ++e) {
    const std::vector<std::size_t> q{4 + rng() % 30, 4 + rng() % 30};
    const auto pair = encode_pair(random_values(rng, cfg.feature_dim), q, p);
    const std::vector<std::size_t> target{4 + rng() % 36, Vocabulary::kEos};
    nll -= seq2seq_logprob(pair, target, p).item();
    tokens += target.size();
  }
  const double per_token = nll / static_cast<double>(tokens);
  EXPECT_NEAR(per_token, std::log(40.0), 0.1 * std::log(40.0));
}

}  // namespace
