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
#include <array>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"
#include "sevit/io.hpp"
#include "test_support.hpp"

namespace {

using sevit::testing::TempDir;
using nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args` (already shell-quoted); stderr goes to the test log.
Result sevit(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(SEVIT_CLI_PATH) + "' " + args;
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// Small dataset and a one-epoch MAR run shared by the CLI tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir();
    sevit::io::atomic_write(path("gen.json"), json{{"lengths", {20, 60}},
                                                   {"train_per_length", 6},
                                                   {"val_per_length", 2},
                                                   {"test_per_length", 4},
                                                   {"feature_dim", 16}}
                                                  .dump());
    sevit::io::atomic_write(path("mar.json"), json{{"mode", "MAR"},
                                                   {"k_train", 3},
                                                   {"k_test", 3},
                                                   {"k_curve", {1, 3}},
                                                   {"epochs", 1},
                                                   {"model_dim", 8},
                                                   {"ff_dim", 8},
                                                   {"retrieval_dim", 16},
                                                   {"seed", 1}}
                                                  .dump());
    gen_ = sevit("gen-data --config " + q(path("gen.json")) + " --out " + q(path("data")) +
                 " --seed 3");
    mar_ = sevit("train --config " + q(path("mar.json")) + " --data " + q(path("data")) +
                 " --out " + q(path("mar")));
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::filesystem::path path(const std::string& name) { return dir_->path() / name; }

  static TempDir* dir_;
  static Result gen_, mar_;
};

TempDir* Pipeline::dir_ = nullptr;
Result Pipeline::gen_;
Result Pipeline::mar_;

TEST(Cli, HelpOnEveryCommand) {
  EXPECT_EQ(sevit("--help").code, 0);
  for (const char* cmd : {"index", "gen-data", "train", "eval", "retrieve", "report"}) {
    const auto r = sevit(std::string(cmd) + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << cmd << ": " << r.out;
  }
}

TEST(Cli, UsageErrorsAreNonZero) {
  EXPECT_NE(sevit("").code, 0);
  EXPECT_NE(sevit("train").code, 0);
  EXPECT_NE(sevit("frobnicate").code, 0);
}

TEST(Cli, MissingInputsExitTwo) {
  EXPECT_EQ(sevit("train --config /nonexistent/sevit.json 2>/dev/null").code, 2);
  EXPECT_EQ(sevit("report /nonexistent/metrics.jsonl 2>/dev/null").code, 2);
}

TEST_F(Pipeline, GenerateAndTrain) {
  ASSERT_EQ(gen_.code, 0) << gen_.out;
  ASSERT_EQ(mar_.code, 0) << mar_.out;
  for (const char* f : {"config.json", "generator.sevt", "retriever.sevt", "metrics.jsonl",
                        "vocab.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(path("mar") / f)) << f;
  }
  const auto config = json::parse(sevit::io::read_file(path("mar") / "config.json"));
  EXPECT_EQ(config["mode"], "MAR");
  EXPECT_EQ(config["temperature"], 1.0);
}

TEST_F(Pipeline, RefusesOverwrite) {
  ASSERT_EQ(mar_.code, 0);
  const auto before = sevit::io::read_file(path("mar") / "metrics.jsonl");
  const auto again = sevit("train --config " + q(path("mar.json")) + " --data " +
                           q(path("data")) + " --out " + q(path("mar")) + " 2>/dev/null");
  EXPECT_EQ(again.code, 3);
  EXPECT_EQ(sevit::io::read_file(path("mar") / "metrics.jsonl"), before);
  EXPECT_EQ(sevit("gen-data --out " + q(path("data")) + " 2>/dev/null").code, 3);
}

TEST_F(Pipeline, ForceIsIdempotent) {
  ASSERT_EQ(gen_.code, 0);
  const auto first = sevit::io::read_file(path("data") / "test" / "videos.svrf");
  ASSERT_EQ(sevit("gen-data --config " + q(path("gen.json")) + " --out " + q(path("data")) +
                  " --seed 3 --force")
                .code,
            0);
  EXPECT_EQ(sevit::io::read_file(path("data") / "test" / "videos.svrf"), first);
}

TEST_F(Pipeline, SeedEnvironmentOverride) {
  ASSERT_EQ(sevit("gen-data --config " + q(path("gen.json")) + " --out " + q(path("env_a")) +
                  " --seed 3",
                  "SEVIT_SEED=11")
                .code,
            0);
  ASSERT_EQ(sevit("gen-data --config " + q(path("gen.json")) + " --out " + q(path("env_b")) +
                  " --seed 11")
                .code,
            0);
  EXPECT_EQ(sevit::io::read_file(path("env_a") / "test" / "videos.svrf"),
            sevit::io::read_file(path("env_b") / "test" / "videos.svrf"));
}

TEST_F(Pipeline, IndexAndRetrieve) {
  ASSERT_EQ(mar_.code, 0);
  const auto store = path("store.svfs");
  const auto idx = sevit("index --videos " + q(path("data")) + " --params " + q(path("mar")) +
                         " --out " + q(store) + " --force");
  ASSERT_EQ(idx.code, 0) << idx.out;

  const std::string base = "retrieve --store " + q(store) + " --params " + q(path("mar")) +
                           " --query 'what object is in the video' --video test-L60-1";
  const auto one = sevit(base + " --k 1 --json");
  ASSERT_EQ(one.code, 0) << one.out;
  const auto j1 = json::parse(one.out);
  ASSERT_EQ(j1["frames"].size(), 1u);
  EXPECT_DOUBLE_EQ(j1["frames"][0]["score"].get<double>(), 1.0);

  const auto five = json::parse(sevit(base + " --k 5 --json").out);
  double total = 0.0;
  for (const auto& f : five["frames"]) total += f["score"].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-6);
  EXPECT_EQ(five["video_id"], "test-L60-1");
  EXPECT_EQ(five["k"], 5);

  const auto table = sevit(base + " --k 3");
  ASSERT_EQ(table.code, 0);
  EXPECT_EQ(table.out.rfind("rank\tframe\ttimestamp\tsimilarity\tscore\n", 0), 0u) << table.out;

  const auto annealed = json::parse(sevit(base + " --k 3 --u 2 --json").out);
  EXPECT_EQ(annealed["u"], 2);
  EXPECT_EQ(annealed["frames"].size(), 3u);

  const auto missing = sevit("retrieve --store " + q(store) + " --params " + q(path("mar")) +
                             " --query 'what' --video no-such-video 2>/dev/null");
  EXPECT_EQ(missing.code, 2);
}

// index -> gen-data -> train MAR -> train FiD -> eval -> report.
TEST_F(Pipeline, EndToEnd) {
  ASSERT_EQ(mar_.code, 0);
  auto fid = json::parse(sevit::io::read_file(path("mar.json")));
  fid["mode"] = "FiD";
  fid["warm_up"] = true;
  fid["u0"] = 2;
  sevit::io::atomic_write(path("fid.json"), fid.dump());
  auto uni = fid;
  uni["mode"] = "FiD-uniform";
  uni["warm_up"] = false;
  uni["u0"] = 0;
  sevit::io::atomic_write(path("uni.json"), uni.dump());

  const auto f = sevit("train --config " + q(path("fid.json")) + " --data " + q(path("data")) +
                       " --out " + q(path("fid")) + " --warm-up-from " + q(path("mar")));
  ASSERT_EQ(f.code, 0) << f.out;
  EXPECT_EQ(sevit::io::read_file(path("fid") / "retriever.sevt"),
            sevit::io::read_file(path("mar") / "retriever.sevt"));
  const auto u = sevit("train --config " + q(path("uni.json")) + " --data " + q(path("data")) +
                       " --out " + q(path("uni")));
  ASSERT_EQ(u.code, 0) << u.out;
  EXPECT_FALSE(std::filesystem::exists(path("uni") / "retriever.sevt"));

  const auto ev = sevit("eval --run " + q(path("fid")) + " --data " + q(path("data")) +
                        " --k 3 --k-curve 1 3 --out " + q(path("fid_eval.jsonl")) + " --force");
  ASSERT_EQ(ev.code, 0) << ev.out;
  const auto ev_json = json::parse(sevit::io::read_file(path("fid_eval.jsonl")));
  EXPECT_EQ(ev_json["record"], "summary");
  EXPECT_EQ(ev_json["k_test"], 3);

  const auto rep = sevit("report " + q(path("uni") / "metrics.jsonl") + " " +
                         q(path("fid") / "metrics.jsonl") + " " + q(path("fid_eval.jsonl")) +
                         " --csv " + q(path("report.csv")) + " --force");
  ASSERT_EQ(rep.code, 0) << rep.out;
  EXPECT_NE(rep.out.find("Accuracy by video length"), std::string::npos);
  const auto csv = sevit::io::read_file(path("report.csv"));
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(rows, 1 + 3 * 2 * 4);
  EXPECT_EQ(csv.rfind("run_id,bucket,k,accuracy,recall\n", 0), 0u);
}

TEST_F(Pipeline, ReportSchemaMismatchFails) {
  ASSERT_EQ(mar_.code, 0);
  const auto ev = sevit("eval --run " + q(path("mar")) + " --data " + q(path("data")) +
                        " --k 3 --k-curve 1 2 --out " + q(path("odd.jsonl")) + " --force");
  ASSERT_EQ(ev.code, 0) << ev.out;
  const auto rep = sevit("report " + q(path("mar") / "metrics.jsonl") + " " +
                         q(path("odd.jsonl")) + " 2>&1");
  EXPECT_NE(rep.code, 0);
  EXPECT_NE(rep.out.find("k values differ"), std::string::npos) << rep.out;
}

}  // namespace
