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
#include <vector>

#include "json.hpp"
#include "sevit/checkpoint.hpp"
#include "sevit/frame_store.hpp"
#include "sevit/vocab.hpp"

// Synthetic long-video QA: distractor frames with a few planted frames whose
// features carry the answer class.
namespace sevit::synth {

struct GenConfig {
  std::size_t classes = 4;    // C, answers per question family
  std::size_t families = 2;   // question families; each video plants one set per family
  std::size_t planted = 3;    // m, planted frames per family
  std::size_t feature_dim = 32;
  std::vector<std::size_t> lengths{20, 60, 180, 400};
  std::size_t train_per_length = 60;
  std::size_t val_per_length = 10;
  std::size_t test_per_length = 40;
  // Planted frame = shared * s_family + class_signal * e_(family,class) + noise.
  double shared_signal = 0.8;
  double class_signal = 0.6;
  double noise = 0.3;
  // Every example asks the fixed captioning-style null query.
  bool null_query = false;

  void validate() const;
  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
  static std::size_t families_max();
};

inline constexpr const char* kNullQuery = "what does the image describe";

// Length strata: <=20, 21-60, 61-180, 181-400 frames.
inline constexpr std::size_t kBucketBounds[] = {20, 60, 180, 400};
std::string length_bucket(std::size_t frames);
std::vector<std::string> bucket_labels();

struct QAPair {
  std::string video_id;
  std::string query;
  std::string answer;
  std::vector<std::size_t> relevant_frames;

  nlohmann::json to_json() const;
  static QAPair from_json(const nlohmann::json& j);
};

struct Example {
  std::string id;  // "<split>/<line>"
  QAPair qa;
  std::vector<std::size_t> query_tokens;
  std::vector<std::size_t> answer_tokens;  // ends with EOS
  std::size_t video_length = 0;
};

struct Split {
  std::string name;
  RawVideoSet videos{0};
  std::vector<Example> examples;
};

struct SyntheticDataset {
  GenConfig config;
  std::uint64_t seed = 0;
  Vocabulary vocab;
  // "family<f>.shared" and "family<f>.class<c>" unit directions in feature space.
  std::vector<NamedTensor> prototypes;
  Split train, val, test;

  const Split& split(std::string_view name) const;

  // <dir>/dataset.json, vocab.txt, prototypes.sevt, <split>/videos.svrf, <split>/qa.jsonl
  void save(const std::filesystem::path& dir) const;
  static SyntheticDataset load(const std::filesystem::path& dir);
};

SyntheticDataset generate_dataset(const GenConfig& config, std::uint64_t seed);

// Reads the features of planted frames that are in `visible_frames` and
// returns the class token of the first one (nearest class prototype). Returns
// {UNK} when no relevant frame is visible.
std::vector<std::size_t> oracle_answerer(const SyntheticDataset& dataset, const Split& split,
                                         const Example& example,
                                         std::span<const std::size_t> visible_frames);
// Unrestricted: sees every frame.
std::vector<std::size_t> oracle_answerer(const SyntheticDataset& dataset, const Split& split,
                                         const Example& example);

// P(at least one of m planted frames among k sampled from n without replacement).
double hypergeometric_hit_probability(std::size_t frames, std::size_t planted, std::size_t k);
// E[|selected ∩ planted|] / min(k, m) for a selection independent of the planted set.
double expected_uniform_recall(std::size_t frames, std::size_t planted, std::size_t k);

}  // namespace sevit::synth
