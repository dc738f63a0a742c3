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

#include "sevit/training.hpp"

#include <cmath>
#include <numeric>

#include "sevit/error.hpp"
#include "sevit/io.hpp"
#include "sevit/ops.hpp"
#include "sevit/rng.hpp"

namespace sevit::train {
namespace {

using synth::Example;

void check_finite_loss(const ad::Tensor& logprob, const Example& ex) {
  if (!std::isfinite(logprob.item())) {
    throw NumericError("non-finite loss for example " + ex.id + " (video " + ex.qa.video_id + ")");
  }
}

std::vector<EncodedPair> encode_selection(const Example& ex, const RetrievalResult& sel,
                                          const RawVideoSet& videos,
                                          const GeneratorParams& generator) {
  std::vector<EncodedPair> pairs;
  pairs.reserve(sel.size());
  for (const auto& e : sel.entries) {
    pairs.push_back(
        encode_pair(videos.frame(ex.qa.video_id, e.frame_index), ex.query_tokens, generator));
  }
  return pairs;
}

// Mean NLL over the batch, backward, SGD. Returns the loss value.
double finish_step(std::vector<ad::Tensor>& logprobs, std::span<const ad::Tensor> params,
                   const TrainConfig& config) {
  auto loss = ad::scale(ad::sum(ad::concat_rows(logprobs)),
                        -1.0 / static_cast<double>(logprobs.size()));
  ad::backward(loss);
  sgd_update(params, clipped_lr(params, config.lr, config.clip_norm));
  return loss.item();
}

double grad_norm(std::span<const ad::Tensor> params) {
  double ss = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

void check_batch(Batch batch) {
  if (batch.empty()) throw ParameterError("training batch is empty");
}

std::vector<ad::Tensor> concat(std::vector<ad::Tensor> a, const std::vector<ad::Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

RetrieverParams clone(const RetrieverParams& r) {
  return RetrieverParams::from_checkpoint(r.to_checkpoint());
}

void check_retriever_matches(const RetrieverParams& r, const synth::SyntheticDataset& data) {
  if (r.config().vocab_size != data.vocab.size() ||
      r.config().feature_dim != data.config.feature_dim) {
    throw ValidationError("warm-up retriever does not match the dataset vocabulary or features");
  }
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kMar: return "MAR";
    case Mode::kFid: return "FiD";
    case Mode::kMarUniform: return "MAR-uniform";
    case Mode::kFidUniform: return "FiD-uniform";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "MAR" || s == "mar") return Mode::kMar;
  if (s == "FiD" || s == "fid") return Mode::kFid;
  if (s == "MAR-uniform" || s == "MAR⊗" || s == "mar-uniform") return Mode::kMarUniform;
  if (s == "FiD-uniform" || s == "FiD⊗" || s == "fid-uniform") return Mode::kFidUniform;
  throw ValidationError("unknown mode '" + std::string(s) +
                        "' (expected MAR, FiD, MAR-uniform or FiD-uniform)");
}

bool uses_retriever(Mode m) { return m == Mode::kMar || m == Mode::kFid; }

FusionMode fusion_of(Mode m) {
  return (m == Mode::kMar || m == Mode::kMarUniform) ? FusionMode::kMar : FusionMode::kFid;
}

void TrainConfig::validate() const {
  if (k_train == 0 || k_test == 0) throw ValidationError("k_train and k_test must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be a finite value >= 0");
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (epochs == 0) throw ValidationError("epochs must be at least 1");
  if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
  if (!(query_init_scale > 0.0)) throw ValidationError("query_init_scale must be positive");
  if (!(clip_norm >= 0.0)) throw ValidationError("clip_norm must be >= 0 (0 disables clipping)");
  if (!freeze_frame_encoder) {
    throw ValidationError("freeze.frame_encoder=false is not supported: the frame encoder is "
                          "always frozen so pre-computed frame vectors stay valid");
  }
  if (warm_up && mode != Mode::kFid) {
    throw ValidationError("warm_up only applies to FiD training");
  }
  for (auto k : k_curve) {
    if (k == 0) throw ValidationError("k_curve entries must be at least 1");
  }
  if (threads < 1) throw ValidationError("threads must be at least 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"k_train", k_train},
          {"k_test", k_test},
          {"lr", lr},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"u0", u0},
          {"seed", seed},
          {"freeze", {{"frame_encoder", freeze_frame_encoder}, {"query_encoder", freeze_query_encoder}}},
          {"warm_up", warm_up},
          {"warm_up_from", warm_up_from},
          {"data_path", data_path},
          {"out_dir", out_dir},
          {"temperature", temperature},
          {"clip_norm", clip_norm},
          {"query_init_scale", query_init_scale},
          {"k_curve", k_curve},
          {"threads", threads},
          {"model_dim", model_dim},
          {"ff_dim", ff_dim},
          {"max_query_len", max_query_len},
          {"retrieval_dim", retrieval_dim}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    c.mode = parse_mode(j.value("mode", std::string("MAR")));
    c.k_train = j.value("k_train", c.k_train);
    c.k_test = j.value("k_test", c.k_test);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.u0 = j.value("u0", c.u0);
    c.seed = j.value("seed", c.seed);
    if (j.contains("freeze")) {
      const auto& f = j.at("freeze");
      c.freeze_frame_encoder = f.value("frame_encoder", c.freeze_frame_encoder);
      c.freeze_query_encoder = f.value("query_encoder", c.freeze_query_encoder);
    }
    c.warm_up = j.value("warm_up", c.warm_up);
    c.warm_up_from = j.value("warm_up_from", c.warm_up_from);
    c.data_path = j.value("data_path", c.data_path);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.temperature = j.value("temperature", c.temperature);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.query_init_scale = j.value("query_init_scale", c.query_init_scale);
    c.k_curve = j.value("k_curve", c.k_curve);
    c.threads = j.value("threads", c.threads);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.max_query_len = j.value("max_query_len", c.max_query_len);
    c.retrieval_dim = j.value("retrieval_dim", c.retrieval_dim);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void sgd_update(std::span<const ad::Tensor> params, double lr) {
  for (auto p : params) {
    if (!p.has_grad()) continue;
    auto values = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] -= lr * g[i];
    p.zero_grad();
  }
}

double clipped_lr(std::span<const ad::Tensor> params, double lr, double clip_norm) {
  const double norm = grad_norm(params);
  if (clip_norm > 0.0 && norm > clip_norm) return lr * clip_norm / norm;
  return lr;
}

StepResult train_step_mar(Batch batch, GeneratorParams& generator, RetrieverParams& retriever,
                          const FrameVectorStore& store, const RawVideoSet& videos,
                          const TrainConfig& config) {
  check_batch(batch);
  if (!retriever.frame_encoder_frozen()) throw ContractError("frame encoder must be frozen");
  StepResult out;
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Tensor> logprobs;
  for (const Example* ex : batch) {
    auto q = encode_query(ex->query_tokens, retriever);
    auto sel = retrieve_top_k(store, ex->qa.video_id, q.data(), config.k_train, config.temperature);
    std::vector<double> selected;
    for (const auto& e : sel.entries) {
      const auto v = store.frame(ex->qa.video_id, e.frame_index);
      selected.insert(selected.end(), v.begin(), v.end());
    }
    const auto frames = ad::Tensor::from_data({sel.size(), store.dim()}, std::move(selected));
    // Cosine similarity of unit vectors, recomputed on the tape so the frame
    // scores carry gradient back to the query encoder.
    auto scores = ad::softmax(ad::matmul(q, ad::transpose(frames)), config.temperature);
    const auto pairs = encode_selection(*ex, sel, videos, generator);
    auto lp = mar_sequence_logprob(pairs, scores, ex->answer_tokens, generator);
    check_finite_loss(lp, *ex);
    logprobs.push_back(lp);
    out.selections.push_back(std::move(sel));
  }
  const auto params = concat(generator.trainable(), retriever.trainable());
  auto loss = ad::scale(ad::sum(ad::concat_rows(logprobs)),
                        -1.0 / static_cast<double>(logprobs.size()));
  ad::backward(loss);
  out.query_grad_norm = grad_norm(retriever.trainable());
  sgd_update(params, clipped_lr(params, config.lr, config.clip_norm));
  out.loss = loss.item();
  return out;
}

StepResult train_step_fid(Batch batch, GeneratorParams& generator,
                          const RetrieverParams& retriever, const FrameVectorStore& store,
                          const RawVideoSet& videos, const TrainConfig& config, std::size_t epoch) {
  check_batch(batch);
  if (retriever.query_trainable() || !retriever.frame_encoder_frozen()) {
    throw ContractError("FiD training needs a frozen retriever");
  }
  const auto window = anneal_schedule({config.u0, config.epochs}, epoch);
  StepResult out;
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Tensor> logprobs;
  for (const Example* ex : batch) {
    const auto q = encode_query(ex->query_tokens, retriever);
    auto sel = annealed_top_k(store, ex->qa.video_id, q.data(), config.k_train, window,
                              config.temperature);
    const auto pairs = encode_selection(*ex, sel, videos, generator);
    auto lp = fid_sequence_logprob(pairs, ex->answer_tokens, generator);
    check_finite_loss(lp, *ex);
    logprobs.push_back(lp);
    out.selections.push_back(std::move(sel));
  }
  out.loss = finish_step(logprobs, generator.trainable(), config);
  return out;
}

StepResult train_baseline(Batch batch, GeneratorParams& generator, const RawVideoSet& videos,
                          const TrainConfig& config, std::uint64_t sample_seed) {
  check_batch(batch);
  if (uses_retriever(config.mode)) {
    throw ContractError("train_baseline needs a uniform-sampling mode, got " + to_string(config.mode));
  }
  StepResult out;
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Tensor> logprobs;
  for (const Example* ex : batch) {
    auto sel = uniform_sample_frames(videos, ex->qa.video_id, config.k_train,
                                     derive_seed(sample_seed, {fnv1a(ex->id)}));
    const auto pairs = encode_selection(*ex, sel, videos, generator);
    auto lp = config.mode == Mode::kMarUniform
                  ? mar_sequence_logprob(pairs, uniform_frame_scores(pairs.size()),
                                         ex->answer_tokens, generator)
                  : fid_sequence_logprob(pairs, ex->answer_tokens, generator);
    check_finite_loss(lp, *ex);
    logprobs.push_back(lp);
    out.selections.push_back(std::move(sel));
  }
  out.loss = finish_step(logprobs, generator.trainable(), config);
  return out;
}

RetrieverParams warm_up_retriever(const std::filesystem::path& mar_checkpoint) {
  auto path = mar_checkpoint;
  if (std::filesystem::is_directory(path)) path /= "retriever.sevt";
  auto r = RetrieverParams::load(path);
  r.set_query_trainable(false);
  return r;
}

synth::ModelBundle TrainedModel::bundle() const {
  return synth::ModelBundle{fusion_of(config.mode), generator, retriever};
}

RetrieverConfig retriever_config(const TrainConfig& config, const synth::SyntheticDataset& data) {
  RetrieverConfig r;
  r.vocab_size = data.vocab.size();
  r.embed_dim = config.model_dim;
  r.feature_dim = data.config.feature_dim;
  r.retrieval_dim = config.retrieval_dim;
  r.temperature = config.temperature;
  r.query_init_scale = config.query_init_scale;
  return r;
}

GeneratorConfig generator_config(const TrainConfig& config, const synth::SyntheticDataset& data) {
  GeneratorConfig g;
  g.vocab_size = data.vocab.size();
  g.model_dim = config.model_dim;
  g.ff_dim = config.ff_dim;
  g.feature_dim = data.config.feature_dim;
  g.max_query_len = config.max_query_len;
  g.max_target_len = 4;
  return g;
}

TrainedModel train_model(const TrainConfig& config, const synth::SyntheticDataset& data,
                         const RetrieverParams* warm_retriever) {
  config.validate();
  if (config.warm_up && warm_retriever == nullptr && config.warm_up_from.empty()) {
    throw ValidationError("FiD with warm_up=true needs warm_up_from (a MAR run)");
  }
  if (data.train.examples.empty()) throw ValidationError("training split is empty");

  TrainedModel model{config, GeneratorParams::init(generator_config(config, data),
                                                   derive_seed(config.seed, {1})),
                     std::nullopt, {}};
  std::optional<FrameVectorStore> store;
  if (uses_retriever(config.mode)) {
    if (config.mode == Mode::kFid && config.warm_up) {
      model.retriever = warm_retriever ? clone(*warm_retriever)
                                       : warm_up_retriever(config.warm_up_from);
      check_retriever_matches(*model.retriever, data);
    } else {
      model.retriever =
          RetrieverParams::init(retriever_config(config, data), derive_seed(config.seed, {2}));
    }
    model.retriever->set_query_trainable(config.mode == Mode::kMar && !config.freeze_query_encoder);
    store = build_index(data.train.videos, *model.retriever);
  }

  std::vector<const Example*> order;
  for (const auto& ex : data.train.examples) order.push_back(&ex);
  Rng shuffle_rng(derive_seed(config.seed, {3}));
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto len = std::min(config.batch_size, order.size() - start);
      Batch batch(order.data() + start, len);
      StepResult r;
      switch (config.mode) {
        case Mode::kMar:
          r = train_step_mar(batch, model.generator, *model.retriever, *store, data.train.videos,
                             config);
          break;
        case Mode::kFid:
          r = train_step_fid(batch, model.generator, *model.retriever, *store, data.train.videos,
                             config, epoch);
          break;
        default:
          r = train_baseline(batch, model.generator, data.train.videos, config,
                             derive_seed(config.seed, {4, epoch}));
          break;
      }
      loss_sum += r.loss;
      ++steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(steps);
    rec.window = config.mode == Mode::kFid ? anneal_schedule({config.u0, config.epochs}, epoch) : 0;
    model.epochs.push_back(rec);
  }
  return model;
}

nlohmann::json summary_record(const std::string& run_id, const TrainConfig& config,
                              const synth::BenchmarkMetrics& metrics,
                              std::span<const EpochRecord> epochs) {
  auto j = metrics.to_json();
  j["record"] = "summary";
  j["run_id"] = run_id;
  j["mode"] = to_string(config.mode);
  j["seed"] = config.seed;
  j["k_train"] = config.k_train;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : epochs) curve.push_back(e.loss);
  j["loss_curve"] = curve;
  j["config"] = config.to_json();
  return j;
}

ExperimentReport run_experiment(const TrainConfig& config, const synth::SyntheticDataset& data,
                                const RetrieverParams* warm_retriever) {
  ExperimentReport report{train_model(config, data, warm_retriever), {}, {}};
  const auto selection =
      uses_retriever(config.mode) ? synth::Selection::kRetrieval : synth::Selection::kUniform;
  report.test = synth::evaluate(report.model.bundle(), data, data.test, config.k_test, selection,
                                config.k_curve, config.threads, derive_seed(config.seed, {5}));

  for (const auto& e : report.model.epochs) {
    report.records.push_back(
        {{"record", "epoch"}, {"epoch", e.epoch}, {"loss", e.loss}, {"window", e.window}});
  }
  const auto run_id = config.out_dir.empty()
                          ? to_string(config.mode) + "-seed" + std::to_string(config.seed)
                          : std::filesystem::path(config.out_dir).filename().string();
  report.records.push_back(summary_record(run_id, config, report.test, report.model.epochs));

  if (!config.out_dir.empty()) {
    const std::filesystem::path out(config.out_dir);
    std::filesystem::create_directories(out);
    io::atomic_write(out / "config.json", config.to_json().dump(2) + "\n");
    report.model.generator.save(out / "generator.sevt");
    if (report.model.retriever) report.model.retriever->save(out / "retriever.sevt");
    io::atomic_write(out / "vocab.txt", data.vocab.serialize());
    std::string lines;
    for (const auto& r : report.records) lines += r.dump() + "\n";
    io::atomic_write(out / "metrics.jsonl", lines);
  }
  return report;
}

}  // namespace sevit::train
