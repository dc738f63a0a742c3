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

#include "sevit/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sevit/error.hpp"
#include "sevit/io.hpp"
#include "sevit/rng.hpp"

namespace sevit::synth {
namespace {

struct Family {
  const char* name;
  std::vector<const char*> templates;
  std::vector<const char*> answers;
};

const std::vector<Family>& family_table() {
  static const std::vector<Family> kFamilies = {
      {"object",
       {"what object is in the video", "which object appears in the video",
        "what object can be seen"},
       {"cat", "dog", "car", "tree", "ball", "cup", "lamp", "book"}},
      {"color",
       {"what color is the object", "which color appears in the video", "what color can be seen"},
       {"red", "blue", "green", "yellow", "black", "white", "pink", "gray"}},
      {"action",
       {"what action happens in the video", "which action is shown", "what action can be seen"},
       {"run", "jump", "swim", "sing", "walk", "read", "cook", "dance"}},
      {"place",
       {"what place is in the video", "which place is shown", "what place can be seen"},
       {"beach", "park", "room", "road", "lake", "city", "farm", "shop"}},
  };
  return kFamilies;
}

std::string shared_name(std::size_t f) { return "family" + std::to_string(f) + ".shared"; }
std::string class_name(std::size_t f, std::size_t c) {
  return "family" + std::to_string(f) + ".class" + std::to_string(c);
}

Vocabulary build_vocab(const GenConfig& cfg) {
  std::vector<std::string> words;
  auto add_text = [&](std::string_view text) {
    for (auto& w : split_whitespace(text)) words.push_back(w);
  };
  add_text(kNullQuery);
  for (std::size_t f = 0; f < cfg.families; ++f) {
    for (const char* t : family_table()[f].templates) add_text(t);
  }
  for (std::size_t f = 0; f < cfg.families; ++f) {
    for (std::size_t c = 0; c < cfg.classes; ++c) words.emplace_back(family_table()[f].answers[c]);
  }
  return Vocabulary(words);
}

std::vector<NamedTensor> make_prototypes(const GenConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x50524f54}));
  const auto d = cfg.feature_dim;
  std::vector<std::vector<double>> basis;
  const auto count = cfg.families * (cfg.classes + 1);
  while (basis.size() < count) {
    auto v = rng.normal_vector(d, 1.0);
    for (const auto& u : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * u[i];
    }
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss < 1e-12) continue;
    for (auto& x : v) x /= std::sqrt(ss);
    basis.push_back(std::move(v));
  }
  std::vector<NamedTensor> out;
  std::size_t next = 0;
  for (std::size_t f = 0; f < cfg.families; ++f) {
    out.push_back({shared_name(f), {d}, basis[next++]});
    for (std::size_t c = 0; c < cfg.classes; ++c) out.push_back({class_name(f, c), {d}, basis[next++]});
  }
  return out;
}

Example make_example(const std::string& split, std::size_t line, QAPair qa,
                     const Vocabulary& vocab, std::size_t video_length) {
  Example ex;
  ex.id = split + "/" + std::to_string(line);
  ex.query_tokens = vocab.encode(qa.query);
  ex.answer_tokens = vocab.encode(qa.answer);
  ex.answer_tokens.push_back(Vocabulary::kEos);
  ex.video_length = video_length;
  ex.qa = std::move(qa);
  if (ex.query_tokens.empty()) throw ValidationError(ex.id + ": empty query");
  for (auto f : ex.qa.relevant_frames) {
    if (f >= video_length) {
      throw ValidationError(ex.id + ": relevant frame " + std::to_string(f) + " beyond video of " +
                            std::to_string(video_length) + " frames");
    }
  }
  return ex;
}

void generate_split(Split& split, std::size_t per_length, const GenConfig& cfg,
                    const std::vector<NamedTensor>& protos, const Vocabulary& vocab, Rng& rng) {
  const auto d = cfg.feature_dim;
  split.videos = RawVideoSet(d);
  const double distractor_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double noise_std = cfg.noise / std::sqrt(static_cast<double>(d));
  for (auto n : cfg.lengths) {
    for (std::size_t i = 0; i < per_length; ++i) {
      VideoFrames video;
      video.video_id = split.name + "-L" + std::to_string(n) + "-" + std::to_string(i);
      video.timestamps.resize(n);
      for (std::size_t t = 0; t < n; ++t) video.timestamps[t] = static_cast<double>(t);
      video.values = rng.normal_vector(n * d, distractor_std);
      const auto planted = rng.sample_without_replacement(n, cfg.planted * cfg.families);
      std::vector<QAPair> qas;
      for (std::size_t f = 0; f < cfg.families; ++f) {
        const auto cls = rng.index(cfg.classes);
        const auto& shared = find_tensor(protos, shared_name(f)).data;
        const auto& dir = find_tensor(protos, class_name(f, cls)).data;
        QAPair qa;
        qa.video_id = video.video_id;
        const auto& fam = family_table()[f];
        const auto tmpl = rng.index(fam.templates.size());
        qa.query = cfg.null_query ? kNullQuery : fam.templates[tmpl];
        qa.answer = fam.answers[cls];
        for (std::size_t j = 0; j < cfg.planted; ++j) {
          const auto frame = planted[f * cfg.planted + j];
          qa.relevant_frames.push_back(frame);
          double* x = video.values.data() + frame * d;
          for (std::size_t e = 0; e < d; ++e) {
            x[e] = cfg.shared_signal * shared[e] + cfg.class_signal * dir[e] + rng.normal(0.0, noise_std);
          }
        }
        std::sort(qa.relevant_frames.begin(), qa.relevant_frames.end());
        qas.push_back(std::move(qa));
      }
      split.videos.add(std::move(video));
      for (auto& qa : qas) {
        split.examples.push_back(
            make_example(split.name, split.examples.size(), std::move(qa), vocab, n));
      }
    }
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace

void GenConfig::validate() const {
  if (classes == 0 || classes > 8) throw ValidationError("classes must be in [1, 8]");
  if (families == 0 || families > families_max()) {
    throw ValidationError("families must be in [1, " + std::to_string(families_max()) + "]");
  }
  if (families * (classes + 1) > feature_dim) {
    throw ValidationError("feature_dim too small for the prototype basis");
  }
  if (lengths.empty()) throw ValidationError("at least one video length is required");
  for (auto n : lengths) {
    if (n == 0 || n > kBucketBounds[std::size(kBucketBounds) - 1]) {
      throw ValidationError("video length " + std::to_string(n) + " outside [1, 400]");
    }
    if (planted * families >= n) {
      throw ValidationError("planted frames (" + std::to_string(planted * families) +
                            ") must be fewer than the video length " + std::to_string(n));
    }
  }
  if (noise < 0.0) throw ValidationError("noise must be non-negative");
}

std::size_t GenConfig::families_max() { return family_table().size(); }

nlohmann::json GenConfig::to_json() const {
  return {{"classes", classes},
          {"families", families},
          {"planted", planted},
          {"feature_dim", feature_dim},
          {"lengths", lengths},
          {"train_per_length", train_per_length},
          {"val_per_length", val_per_length},
          {"test_per_length", test_per_length},
          {"shared_signal", shared_signal},
          {"class_signal", class_signal},
          {"noise", noise},
          {"null_query", null_query}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.classes = j.value("classes", c.classes);
    c.families = j.value("families", c.families);
    c.planted = j.value("planted", c.planted);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.lengths = j.value("lengths", c.lengths);
    c.train_per_length = j.value("train_per_length", c.train_per_length);
    c.val_per_length = j.value("val_per_length", c.val_per_length);
    c.test_per_length = j.value("test_per_length", c.test_per_length);
    c.shared_signal = j.value("shared_signal", c.shared_signal);
    c.class_signal = j.value("class_signal", c.class_signal);
    c.noise = j.value("noise", c.noise);
    c.null_query = j.value("null_query", c.null_query);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("generation config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string length_bucket(std::size_t frames) {
  for (auto b : kBucketBounds) {
    if (frames <= b) return std::to_string(b);
  }
  throw ValidationError("video of " + std::to_string(frames) + " frames exceeds the longest bucket");
}

std::vector<std::string> bucket_labels() {
  std::vector<std::string> out;
  for (auto b : kBucketBounds) out.push_back(std::to_string(b));
  return out;
}

nlohmann::json QAPair::to_json() const {
  return {{"video_id", video_id},
          {"query", query},
          {"answer", answer},
          {"relevant_frames", relevant_frames}};
}

QAPair QAPair::from_json(const nlohmann::json& j) {
  QAPair qa;
  qa.video_id = j.at("video_id").get<std::string>();
  qa.query = j.at("query").get<std::string>();
  qa.answer = j.at("answer").get<std::string>();
  qa.relevant_frames = j.at("relevant_frames").get<std::vector<std::size_t>>();
  return qa;
}

const Split& SyntheticDataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw NotFoundError("no split named '" + std::string(name) + "'");
}

SyntheticDataset generate_dataset(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticDataset ds;
  ds.config = config;
  ds.seed = seed;
  ds.vocab = build_vocab(config);
  ds.prototypes = make_prototypes(config, seed);
  ds.train.name = "train";
  ds.val.name = "val";
  ds.test.name = "test";
  Rng rng(derive_seed(seed, {0x44415441}));
  generate_split(ds.train, config.train_per_length, config, ds.prototypes, ds.vocab, rng);
  generate_split(ds.val, config.val_per_length, config, ds.prototypes, ds.vocab, rng);
  generate_split(ds.test, config.test_per_length, config, ds.prototypes, ds.vocab, rng);
  return ds;
}

void SyntheticDataset::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json meta = {{"format", 1}, {"seed", seed}, {"config", config.to_json()}};
  io::atomic_write(dir / "dataset.json", meta.dump(2) + "\n");
  io::atomic_write(dir / "vocab.txt", vocab.serialize());
  save_checkpoint(dir / "prototypes.sevt", prototypes);
  for (const Split* s : {&train, &val, &test}) {
    std::filesystem::create_directories(dir / s->name);
    s->videos.save(dir / s->name / "videos.svrf");
    std::string lines;
    for (const auto& ex : s->examples) lines += ex.qa.to_json().dump() + "\n";
    io::atomic_write(dir / s->name / "qa.jsonl", lines);
  }
}

SyntheticDataset SyntheticDataset::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw NotFoundError("dataset directory not found: " + dir.string());
  }
  SyntheticDataset ds;
  const auto meta = read_json(dir / "dataset.json");
  try {
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.config = GenConfig::from_json(meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError((dir / "dataset.json").string() + ": " + e.what());
  }
  ds.vocab = Vocabulary::parse(io::read_file(dir / "vocab.txt"));
  ds.prototypes = load_checkpoint(dir / "prototypes.sevt");
  for (Split* s : {&ds.train, &ds.val, &ds.test}) {
    s->name = s == &ds.train ? "train" : s == &ds.val ? "val" : "test";
    s->videos = RawVideoSet::load(dir / s->name / "videos.svrf");
    const auto qa_path = dir / s->name / "qa.jsonl";
    std::istringstream in(io::read_file(qa_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      QAPair qa;
      try {
        qa = QAPair::from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw LoadError(qa_path.string() + ":" + std::to_string(lineno + 1) + ": " + e.what());
      }
      const auto n = s->videos.num_frames(qa.video_id);
      s->examples.push_back(make_example(s->name, lineno, std::move(qa), ds.vocab, n));
      ++lineno;
    }
  }
  return ds;
}

std::vector<std::size_t> oracle_answerer(const SyntheticDataset& dataset, const Split& split,
                                         const Example& example,
                                         std::span<const std::size_t> visible_frames) {
  const auto& cfg = dataset.config;
  for (auto frame : example.qa.relevant_frames) {
    if (std::find(visible_frames.begin(), visible_frames.end(), frame) == visible_frames.end()) {
      continue;
    }
    const auto x = split.videos.frame(example.qa.video_id, frame);
    double best = -1e300;
    std::size_t best_f = 0, best_c = 0;
    for (std::size_t f = 0; f < cfg.families; ++f) {
      for (std::size_t c = 0; c < cfg.classes; ++c) {
        const auto& dir = find_tensor(dataset.prototypes, class_name(f, c)).data;
        double dot = 0.0;
        for (std::size_t e = 0; e < x.size(); ++e) dot += x[e] * dir[e];
        if (dot > best) {
          best = dot;
          best_f = f;
          best_c = c;
        }
      }
    }
    return {dataset.vocab.id(family_table()[best_f].answers[best_c])};
  }
  return {Vocabulary::kUnk};
}

std::vector<std::size_t> oracle_answerer(const SyntheticDataset& dataset, const Split& split,
                                         const Example& example) {
  return oracle_answerer(dataset, split, example, example.qa.relevant_frames);
}

double hypergeometric_hit_probability(std::size_t frames, std::size_t planted, std::size_t k) {
  if (planted == 0) return 0.0;
  k = std::min(k, frames);
  double miss = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (frames - i <= planted) return 1.0;
    miss *= static_cast<double>(frames - planted - i) / static_cast<double>(frames - i);
  }
  return 1.0 - miss;
}

double expected_uniform_recall(std::size_t frames, std::size_t planted, std::size_t k) {
  if (planted == 0 || frames == 0) return 0.0;
  k = std::min(k, frames);
  const double overlap = static_cast<double>(k) * static_cast<double>(planted) /
                         static_cast<double>(frames);
  return overlap / static_cast<double>(std::min(k, planted));
}

}  // namespace sevit::synth
