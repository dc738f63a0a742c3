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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sevit/evaluate.hpp"
#include "sevit/generator.hpp"
#include "sevit/retriever.hpp"
#include "sevit/synthbench.hpp"

namespace sevit::train {

// MAR / FiD use the retriever; the *Uniform modes are the uniform-sampling
// baselines and never touch retriever parameters.
enum class Mode { kMar, kFid, kMarUniform, kFidUniform };

std::string to_string(Mode m);
Mode parse_mode(std::string_view s);
bool uses_retriever(Mode m);
FusionMode fusion_of(Mode m);

struct TrainConfig {
  Mode mode = Mode::kMar;
  std::size_t k_train = 5;
  std::size_t k_test = 10;
  double lr = 0.05;
  std::size_t batch_size = 4;
  std::size_t epochs = 5;
  std::size_t u0 = 0;  // annealing window at epoch 0 (FiD only)
  std::uint64_t seed = 0;
  bool freeze_frame_encoder = true;
  bool freeze_query_encoder = false;
  bool warm_up = false;           // FiD: start from a MAR-trained retriever
  std::string warm_up_from;       // MAR run directory or retriever checkpoint
  std::string data_path;
  std::string out_dir;
  double temperature = 1.0;
  double clip_norm = 5.0;  // global gradient-norm clip per step; 0 disables
  double query_init_scale = 0.1;  // retriever query-encoder init std
  std::vector<std::size_t> k_curve{1, 2, 5, 10};
  int threads = 1;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t max_query_len = 8;
  std::size_t retrieval_dim = 32;

  // Rejects contradictions before any training starts.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

using Batch = std::span<const synth::Example* const>;

// Per-step outcome; `loss` is the batch-mean NLL before the update.
struct StepResult {
  double loss = 0.0;
  double query_grad_norm = 0.0;
  std::vector<RetrievalResult> selections;
};

// Joint retriever/generator step on the marginalized NLL with plain SGD.
// The frame store must have been built with `retriever`'s frame encoder.
StepResult train_step_mar(Batch batch, GeneratorParams& generator, RetrieverParams& retriever,
                          const FrameVectorStore& store, const RawVideoSet& videos,
                          const TrainConfig& config);

// Generator-only FiD step over annealed top-k frames of a frozen retriever.
StepResult train_step_fid(Batch batch, GeneratorParams& generator,
                          const RetrieverParams& retriever, const FrameVectorStore& store,
                          const RawVideoSet& videos, const TrainConfig& config, std::size_t epoch);

// Uniform-sampling baseline step (MAR with 1/k scores, or FiD).
StepResult train_baseline(Batch batch, GeneratorParams& generator, const RawVideoSet& videos,
                          const TrainConfig& config, std::uint64_t sample_seed);

// Loads a MAR-trained retriever and marks it frozen. Accepts a retriever
// checkpoint file or a run directory containing retriever.sevt.
RetrieverParams warm_up_retriever(const std::filesystem::path& mar_checkpoint);

void sgd_update(std::span<const ad::Tensor> params, double lr);
// Rescales lr so the global gradient norm of `params` is at most clip_norm.
double clipped_lr(std::span<const ad::Tensor> params, double lr, double clip_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::size_t window = 0;
};

struct TrainedModel {
  TrainConfig config;
  GeneratorParams generator;
  std::optional<RetrieverParams> retriever;
  std::vector<EpochRecord> epochs;

  synth::ModelBundle bundle() const;
};

RetrieverConfig retriever_config(const TrainConfig& config, const synth::SyntheticDataset& data);
GeneratorConfig generator_config(const TrainConfig& config, const synth::SyntheticDataset& data);

// In-memory training. For FiD with warm_up, `warm_retriever` is used when
// given, else the retriever is loaded from config.warm_up_from.
TrainedModel train_model(const TrainConfig& config, const synth::SyntheticDataset& data,
                         const RetrieverParams* warm_retriever = nullptr);

struct ExperimentReport {
  TrainedModel model;
  synth::BenchmarkMetrics test;
  std::vector<nlohmann::json> records;  // epoch records then the summary
};

// Trains, evaluates on the test split with k_test (and the k curve), and,
// when config.out_dir is set, writes config.json, metrics.jsonl,
// generator.sevt and (retrieval modes) retriever.sevt into it.
ExperimentReport run_experiment(const TrainConfig& config, const synth::SyntheticDataset& data,
                                const RetrieverParams* warm_retriever = nullptr);

nlohmann::json summary_record(const std::string& run_id, const TrainConfig& config,
                              const synth::BenchmarkMetrics& metrics,
                              std::span<const EpochRecord> epochs);

}  // namespace sevit::train
