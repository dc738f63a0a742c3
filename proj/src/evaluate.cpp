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

#include "sevit/evaluate.hpp"

#include <algorithm>
#include <cstdint>

#ifdef SEVIT_OPENMP
#include <omp.h>
#endif

#include "sevit/error.hpp"
#include "sevit/rng.hpp"
#include "sevit/vocab.hpp"

namespace sevit::synth {
namespace {

nlohmann::json bucket_json(const BucketMetrics& b) {
  return {{"count", b.count}, {"accuracy", b.accuracy}, {"recall", b.recall}};
}

nlohmann::json k_json(const KMetrics& m) {
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [label, b] : m.buckets) buckets[label] = bucket_json(b);
  return {{"k", m.k},
          {"count", m.count},
          {"accuracy", m.accuracy},
          {"recall", m.recall},
          {"buckets", buckets}};
}

void check_compatible(const ModelBundle& model, const SyntheticDataset& dataset) {
  const auto& g = model.generator.config;
  if (g.vocab_size != dataset.vocab.size()) {
    throw ValidationError("generator vocabulary (" + std::to_string(g.vocab_size) +
                          ") does not match the dataset (" + std::to_string(dataset.vocab.size()) +
                          ")");
  }
  if (g.feature_dim != dataset.config.feature_dim) {
    throw ValidationError("generator frame features (" + std::to_string(g.feature_dim) +
                          ") do not match the dataset (" +
                          std::to_string(dataset.config.feature_dim) + ")");
  }
  if (model.retriever) {
    const auto& r = model.retriever->config();
    if (r.vocab_size != dataset.vocab.size() || r.feature_dim != dataset.config.feature_dim) {
      throw ValidationError("retriever checkpoint does not match the dataset");
    }
  }
}

}  // namespace

std::string to_string(Selection s) { return s == Selection::kRetrieval ? "retrieval" : "uniform"; }

Selection parse_selection(std::string_view s) {
  if (s == "retrieval") return Selection::kRetrieval;
  if (s == "uniform") return Selection::kUniform;
  throw ValidationError("selection must be 'retrieval' or 'uniform', got '" + std::string(s) + "'");
}

nlohmann::json BenchmarkMetrics::to_json() const {
  nlohmann::json by = nlohmann::json::array();
  for (const auto& m : by_k) by.push_back(k_json(m));
  nlohmann::json buckets = nlohmann::json::object();
  for (const auto& [label, b] : at_k_test.buckets) buckets[label] = bucket_json(b);
  return {{"k_test", k_test},
          {"selection", to_string(selection)},
          {"count", at_k_test.count},
          {"accuracy", at_k_test.accuracy},
          {"recall", at_k_test.recall},
          {"buckets", buckets},
          {"by_k", by}};
}

double selection_recall(const RetrievalResult& selection, std::span<const std::size_t> planted,
                        std::size_t k) {
  if (planted.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : selection.entries) {
    if (std::find(planted.begin(), planted.end(), e.frame_index) != planted.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::min(k, planted.size()));
}

bool exact_match(std::span<const std::size_t> generated, std::span<const std::size_t> answer) {
  auto strip = [](std::span<const std::size_t> s) {
    auto end = std::find(s.begin(), s.end(), Vocabulary::kEos);
    return std::vector<std::size_t>(s.begin(), end);
  };
  return strip(generated) == strip(answer);
}

KMetrics evaluate_at_k(const Split& split, std::size_t k, const Selector& select,
                       const Answerer& answer, int threads) {
  const auto n = split.examples.size();
  std::vector<std::uint8_t> correct(n, 0);
  std::vector<double> recall(n, 0.0);
  std::vector<std::string> errors(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(threads, 1))
  for (std::int64_t i = 0; i < count; ++i) {
    const auto& ex = split.examples[static_cast<std::size_t>(i)];
    try {
      const auto sel = select(ex, k);
      recall[static_cast<std::size_t>(i)] = selection_recall(sel, ex.qa.relevant_frames, k);
      correct[static_cast<std::size_t>(i)] = exact_match(answer(ex, sel), ex.answer_tokens) ? 1 : 0;
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = ex.id + ": " + e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("evaluation failed at " + e);
  }

  KMetrics m;
  m.k = k;
  std::map<std::string, std::size_t> recall_counts;
  std::size_t recall_total = 0;
  for (const auto& label : bucket_labels()) m.buckets[label] = {};
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = split.examples[i];
    auto& b = m.buckets[length_bucket(ex.video_length)];
    ++b.count;
    b.accuracy += correct[i];
    m.accuracy += correct[i];
    if (!ex.qa.relevant_frames.empty()) {
      b.recall += recall[i];
      m.recall += recall[i];
      ++recall_counts[length_bucket(ex.video_length)];
      ++recall_total;
    }
  }
  m.count = n;
  if (n) m.accuracy /= static_cast<double>(n);
  if (recall_total) m.recall /= static_cast<double>(recall_total);
  for (auto& [label, b] : m.buckets) {
    if (b.count) b.accuracy /= static_cast<double>(b.count);
    if (recall_counts[label]) b.recall /= static_cast<double>(recall_counts[label]);
  }
  return m;
}

BenchmarkMetrics evaluate(const ModelBundle& model, const SyntheticDataset& dataset,
                          const Split& split, std::size_t k_test, Selection selection,
                          std::span<const std::size_t> k_curve, int threads, std::uint64_t seed) {
  check_compatible(model, dataset);
  if (k_test == 0) throw ValidationError("k_test must be at least 1");
  std::optional<FrameVectorStore> store;
  if (selection == Selection::kRetrieval) {
    if (!model.retriever) throw ValidationError("retrieval evaluation needs a retriever checkpoint");
    store = build_index(split.videos, *model.retriever);
  }

  Selector select = [&](const Example& ex, std::size_t k) {
    if (selection == Selection::kUniform) {
      return uniform_sample_frames(split.videos, ex.qa.video_id, k,
                                   derive_seed(seed, {0x45564c, fnv1a(ex.id)}));
    }
    const auto q = encode_query(ex.query_tokens, *model.retriever);
    return retrieve_top_k(*store, ex.qa.video_id, q.data(), k, model.retriever->temperature());
  };
  Answerer answer = [&](const Example& ex, const RetrievalResult& sel) {
    std::vector<EncodedPair> pairs;
    for (const auto& e : sel.entries) {
      pairs.push_back(encode_pair(split.videos.frame(ex.qa.video_id, e.frame_index),
                                  ex.query_tokens, model.generator));
    }
    return greedy_generate(pairs, sel.scores(), model.fusion, model.generator,
                           model.generator.config.max_target_len);
  };

  BenchmarkMetrics out;
  out.k_test = k_test;
  out.selection = selection;
  out.at_k_test = evaluate_at_k(split, k_test, select, answer, threads);
  for (auto k : k_curve) {
    if (k == k_test) {
      out.by_k.push_back(out.at_k_test);
    } else {
      out.by_k.push_back(evaluate_at_k(split, k, select, answer, threads));
    }
  }
  return out;
}

}  // namespace sevit::synth
