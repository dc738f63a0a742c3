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

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sevit/error.hpp"
#include "sevit/evaluate.hpp"
#include "sevit/io.hpp"
#include "sevit/report.hpp"
#include "sevit/retriever.hpp"
#include "sevit/rng.hpp"
#include "sevit/synthbench.hpp"
#include "sevit/training.hpp"
#include "sevit/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sevit::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitNotFound = 2;
constexpr int kExitRefused = 3;

void refuse_existing(const fs::path& p, bool force) {
  if (!force && fs::exists(p)) {
    throw OverwriteRefused(p.string() + " already exists (pass --force to overwrite)");
  }
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw NotFoundError(what + " not found: " + p.string());
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SEVIT_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(std::string("SEVIT_SEED is not an unsigned integer: ") + s);
  }
}

json read_json(const fs::path& p) {
  require_exists(p, "file");
  try {
    return json::parse(io::read_file(p));
  } catch (const json::exception& e) {
    throw ValidationError(p.string() + ": " + e.what());
  }
}

// A run directory or a checkpoint file.
fs::path retriever_path(const fs::path& p) {
  return fs::is_directory(p) ? p / "retriever.sevt" : p;
}

fs::path videos_path(const fs::path& p) {
  if (!fs::is_directory(p)) return p;
  if (fs::exists(p / "videos.svrf")) return p / "videos.svrf";
  return p / "test" / "videos.svrf";
}

struct IndexArgs {
  std::string videos, params, out;
  bool force = false;
};

int cmd_index(const IndexArgs& a) {
  const auto vpath = videos_path(a.videos);
  const auto ppath = retriever_path(a.params);
  require_exists(vpath, "videos");
  require_exists(ppath, "retriever checkpoint");
  refuse_existing(a.out, a.force);
  const auto videos = RawVideoSet::load(vpath);
  const auto params = RetrieverParams::load(ppath);
  const auto store = build_index(videos, params);
  store.save(a.out);
  std::cout << "indexed " << store.size() << " videos (dim " << store.dim() << ") -> " << a.out
            << "\n";
  return kExitOk;
}

struct GenArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

int cmd_gen_data(const GenArgs& a) {
  synth::GenConfig cfg;
  if (!a.config.empty()) cfg = synth::GenConfig::from_json(read_json(a.config));
  cfg.validate();
  std::uint64_t seed = a.seed.value_or(0);
  if (auto s = env_seed()) seed = *s;
  refuse_existing(a.out, a.force);
  const auto data = synth::generate_dataset(cfg, seed);
  data.save(a.out);
  std::cout << "wrote dataset (" << data.train.examples.size() << " train, "
            << data.val.examples.size() << " val, " << data.test.examples.size()
            << " test examples) -> " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config, data, out, warm_up_from;
  bool force = false;
};

int cmd_train(const TrainArgs& a) {
  auto j = read_json(a.config);
  if (!a.data.empty()) j["data_path"] = a.data;
  if (!a.out.empty()) j["out_dir"] = a.out;
  if (!a.warm_up_from.empty()) j["warm_up_from"] = a.warm_up_from;
  if (auto s = env_seed()) j["seed"] = *s;
  const auto cfg = train::TrainConfig::from_json(j);
  if (cfg.data_path.empty()) throw ValidationError("config has no data_path");
  if (cfg.out_dir.empty()) throw ValidationError("config has no out_dir");
  require_exists(cfg.data_path, "dataset");
  if (cfg.warm_up) require_exists(retriever_path(cfg.warm_up_from), "warm-up retriever");
  refuse_existing(cfg.out_dir, a.force);
  const auto data = synth::SyntheticDataset::load(cfg.data_path);
  const auto report = train::run_experiment(cfg, data);
  std::cout << train::to_string(cfg.mode) << " seed " << cfg.seed << ": test accuracy "
            << report.test.at_k_test.accuracy << ", recall@" << cfg.k_test << " "
            << report.test.at_k_test.recall << " -> " << cfg.out_dir << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string run, data, selection, split = "test", out;
  std::size_t k = 10;
  std::vector<std::size_t> k_curve{1, 2, 5, 10};
  int threads = 1;
  bool force = false;
};

int cmd_eval(const EvalArgs& a) {
  const fs::path run(a.run);
  require_exists(run / "config.json", "run config");
  require_exists(run / "generator.sevt", "generator checkpoint");
  require_exists(a.data, "dataset");
  if (!a.out.empty()) refuse_existing(a.out, a.force);
  auto cfg = train::TrainConfig::from_json(read_json(run / "config.json"));
  if (auto s = env_seed()) cfg.seed = *s;
  cfg.k_test = a.k;
  cfg.k_curve = a.k_curve;

  synth::ModelBundle bundle{train::fusion_of(cfg.mode), GeneratorParams::load(run / "generator.sevt"),
                            std::nullopt};
  if (fs::exists(run / "retriever.sevt")) bundle.retriever = RetrieverParams::load(run / "retriever.sevt");
  const auto selection = a.selection.empty()
                             ? (bundle.retriever ? synth::Selection::kRetrieval
                                                 : synth::Selection::kUniform)
                             : synth::parse_selection(a.selection);

  const auto data = synth::SyntheticDataset::load(a.data);
  const auto metrics = synth::evaluate(bundle, data, data.split(a.split), a.k, selection,
                                       a.k_curve, a.threads, derive_seed(cfg.seed, {5}));
  auto record = train::summary_record(run.filename().string() + "/" + synth::to_string(selection),
                                      cfg, metrics, {});
  const auto text = record.dump() + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    io::atomic_write(a.out, text);
    std::cout << "accuracy " << metrics.at_k_test.accuracy << ", recall@" << a.k << " "
              << metrics.at_k_test.recall << " -> " << a.out << "\n";
  }
  return kExitOk;
}

struct RetrieveArgs {
  std::string store, params, query, video, vocab;
  std::size_t k = 5;
  std::size_t u = 0;
  bool as_json = false;
};

int cmd_retrieve(const RetrieveArgs& a) {
  const auto ppath = retriever_path(a.params);
  require_exists(a.store, "frame store");
  require_exists(ppath, "retriever checkpoint");
  const fs::path vocab_path = a.vocab.empty() ? ppath.parent_path() / "vocab.txt" : fs::path(a.vocab);
  require_exists(vocab_path, "vocabulary (pass --vocab)");
  const auto store = FrameVectorStore::load(a.store);
  const auto params = RetrieverParams::load(ppath);
  const auto vocab = Vocabulary::parse(io::read_file(vocab_path));
  if (!store.contains(a.video)) throw NotFoundError("video '" + a.video + "' is not in the store");

  const auto tokens = vocab.encode(a.query);
  const auto q = encode_query(tokens, params);
  const auto result = a.u == 0
                          ? retrieve_top_k(store, a.video, q.data(), a.k, params.temperature())
                          : annealed_top_k(store, a.video, q.data(), a.k, a.u, params.temperature());
  if (a.as_json) {
    json frames = json::array();
    for (std::size_t r = 0; r < result.entries.size(); ++r) {
      const auto& e = result.entries[r];
      frames.push_back({{"rank", r + 1},
                        {"frame_index", e.frame_index},
                        {"timestamp", e.timestamp},
                        {"similarity", e.similarity},
                        {"score", e.score}});
    }
    json out{{"video_id", a.video}, {"query", a.query},        {"k", a.k},
             {"u", a.u},            {"clamped", result.clamped}, {"fallback", result.fallback},
             {"frames", frames}};
    std::cout << out.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << "rank\tframe\ttimestamp\tsimilarity\tscore\n" << std::fixed;
  for (std::size_t r = 0; r < result.entries.size(); ++r) {
    const auto& e = result.entries[r];
    std::cout << r + 1 << '\t' << e.frame_index << '\t' << std::setprecision(1) << e.timestamp
              << '\t' << std::setprecision(6) << e.similarity << '\t' << e.score << '\n';
  }
  if (result.clamped) std::cout << "note: k clamped to the video length\n";
  if (result.fallback) std::cout << "note: annealing window too wide, suppressed frames reused\n";
  return kExitOk;
}

struct ReportArgs {
  std::vector<std::string> files;
  std::string csv;
  bool force = false;
};

int cmd_report(const ReportArgs& a) {
  std::vector<report::RunSummary> runs;
  for (const auto& f : a.files) {
    require_exists(f, "metrics file");
    runs.push_back(report::load_metrics_file(f));
  }
  const auto rep = report::make_report(runs);
  std::cout << rep.table;
  if (!a.csv.empty()) {
    refuse_existing(a.csv, a.force);
    io::atomic_write(a.csv, rep.csv);
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"sevit: retrieval-augmented long-video QA at desk scale"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sevit 0.1.0");

  IndexArgs ia;
  auto* index = app.add_subcommand("index", "Encode raw frame features into a frame-vector store");
  index->add_option("--videos", ia.videos, "Raw videos (.svrf file or split directory)")->required();
  index->add_option("--params", ia.params, "Retriever checkpoint or run directory")->required();
  index->add_option("--out", ia.out, "Output frame store (.svfs)")->required();
  index->add_flag("--force", ia.force, "Overwrite an existing output");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic long-video QA benchmark");
  gen->add_option("--config", ga.config, "Generator config JSON (defaults when omitted)");
  gen->add_option("--out", ga.out, "Output dataset directory")->required();
  gen->add_option("--seed", ga.seed, "Dataset seed (SEVIT_SEED overrides)");
  gen->add_flag("--force", ga.force, "Overwrite an existing output");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train one model and evaluate it on the test split");
  trn->add_option("--config", ta.config, "Training config JSON")->required();
  trn->add_option("--data", ta.data, "Dataset directory (overrides data_path)");
  trn->add_option("--out", ta.out, "Run directory (overrides out_dir)");
  trn->add_option("--warm-up-from", ta.warm_up_from, "MAR run directory (overrides warm_up_from)");
  trn->add_flag("--force", ta.force, "Overwrite an existing run directory");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained run on a dataset split");
  ev->add_option("--run", ea.run, "Run directory")->required();
  ev->add_option("--data", ea.data, "Dataset directory")->required();
  ev->add_option("--k", ea.k, "Test-time k")->capture_default_str();
  ev->add_option("--k-curve", ea.k_curve, "k values for the accuracy-vs-k curve")
      ->capture_default_str();
  ev->add_option("--selection", ea.selection, "retrieval or uniform (default: by run)")
      ->check(CLI::IsMember({"retrieval", "uniform"}));
  ev->add_option("--split", ea.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("--out", ea.out, "Metrics output (JSON lines); stdout when omitted");
  ev->add_option("--threads", ea.threads, "Evaluation worker threads")->capture_default_str();
  ev->add_flag("--force", ea.force, "Overwrite an existing output");

  RetrieveArgs ra;
  auto* ret = app.add_subcommand("retrieve", "Retrieve the top-k frames of one video for a query");
  ret->add_option("--store", ra.store, "Frame store (.svfs)")->required();
  ret->add_option("--params", ra.params, "Retriever checkpoint or run directory")->required();
  ret->add_option("--query", ra.query, "Query text")->required();
  ret->add_option("--video", ra.video, "Video id")->required();
  ret->add_option("--k", ra.k, "Number of frames")->capture_default_str();
  ret->add_option("--u", ra.u, "Annealing window (0 = plain top-k)")->capture_default_str();
  ret->add_option("--vocab", ra.vocab, "Vocabulary file (default: next to the checkpoint)");
  ret->add_flag("--json", ra.as_json, "Print JSON instead of a table");

  ReportArgs pa;
  auto* rep = app.add_subcommand("report", "Compare runs by video length and by test-time k");
  rep->add_option("files", pa.files, "metrics.jsonl files")->required();
  rep->add_option("--csv", pa.csv, "Write plot-ready CSV here");
  rep->add_flag("--force", pa.force, "Overwrite an existing CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInternal;
  }

  if (*index) return cmd_index(ia);
  if (*gen) return cmd_gen_data(ga);
  if (*trn) return cmd_train(ta);
  if (*ev) return cmd_eval(ea);
  if (*ret) return cmd_retrieve(ra);
  return cmd_report(pa);
}

}  // namespace
}  // namespace sevit::cli

int main(int argc, char** argv) {
  try {
    return sevit::cli::run(argc, argv);
  } catch (const sevit::NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sevit::cli::kExitNotFound;
  } catch (const sevit::OverwriteRefused& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sevit::cli::kExitRefused;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sevit::cli::kExitInternal;
  }
}
