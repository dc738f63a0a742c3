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
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sevit/generator.hpp"
#include "sevit/retriever.hpp"
#include "sevit/synthbench.hpp"

namespace sevit::synth {

enum class Selection { kRetrieval, kUniform };
std::string to_string(Selection s);
Selection parse_selection(std::string_view s);

struct BucketMetrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  double recall = 0.0;  // mean over examples with at least one planted frame
};

struct KMetrics {
  std::size_t k = 0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double recall = 0.0;
  std::map<std::string, BucketMetrics> buckets;  // every label of bucket_labels()
};

struct BenchmarkMetrics {
  std::size_t k_test = 0;
  Selection selection = Selection::kRetrieval;
  KMetrics at_k_test;
  std::vector<KMetrics> by_k;  // accuracy vs test-time k

  nlohmann::json to_json() const;
};

// Frames offered to the answerer for one example.
using Selector = std::function<RetrievalResult(const Example&, std::size_t k)>;
// Answer tokens (no EOS) for one example given its selected frames.
using Answerer = std::function<std::vector<std::size_t>(const Example&, const RetrievalResult&)>;

// recall = |selected ∩ planted| / min(k, m)
double selection_recall(const RetrievalResult& selection, std::span<const std::size_t> planted,
                        std::size_t k);
bool exact_match(std::span<const std::size_t> generated, std::span<const std::size_t> answer);

// Runs every example (OpenMP across examples when threads > 1) and reduces
// in example order, so results do not depend on the thread count.
KMetrics evaluate_at_k(const Split& split, std::size_t k, const Selector& select,
                       const Answerer& answer, int threads = 1);

struct ModelBundle {
  FusionMode fusion = FusionMode::kMar;
  GeneratorParams generator;
  std::optional<RetrieverParams> retriever;  // required for retrieval selection
};

// Exact-match evaluation with greedy decoding. Uniform selection is seeded
// per example from `seed`.
BenchmarkMetrics evaluate(const ModelBundle& model, const SyntheticDataset& dataset,
                          const Split& split, std::size_t k_test, Selection selection,
                          std::span<const std::size_t> k_curve, int threads = 1,
                          std::uint64_t seed = 0);

}  // namespace sevit::synth
