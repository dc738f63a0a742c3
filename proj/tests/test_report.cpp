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
#include <sstream>
#include <string>
#include <vector>

#include "sevit/error.hpp"
#include "sevit/io.hpp"
#include "sevit/report.hpp"
#include "test_support.hpp"

namespace {

using namespace sevit;
using namespace sevit::report;
using sevit::testing::TempDir;

RunSummary make_run(const std::string& id, double base, std::vector<std::size_t> ks = {1, 2, 5, 10},
                    std::vector<std::string> buckets = {"20", "60", "180", "400"}) {
  RunSummary r;
  r.run_id = id;
  r.mode = "MAR";
  r.selection = "retrieval";
  r.k_test = 10;
  r.accuracy = base;
  r.recall = base / 2;
  double step = 0.0;
  for (const auto& b : buckets) r.buckets[b] = {base + (step += 0.01), 0.5};
  for (auto k : ks) {
    for (const auto& b : buckets) r.by_k[k][b] = {base + 0.001 * static_cast<double>(k), 0.25};
    r.by_k_overall[k] = {base + 0.001 * static_cast<double>(k), 0.25};
  }
  return r;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

TEST(Report, SingleRunPassthrough) {
  const auto run = make_run("mar", 0.5);
  const auto rep = make_report({run});
  EXPECT_NE(rep.table.find("Accuracy by video length (k_test=10)"), std::string::npos);
  EXPECT_NE(rep.table.find("Accuracy by test-time k"), std::string::npos);
  EXPECT_EQ(rep.table.find("delta"), std::string::npos);
  EXPECT_NE(rep.table.find("180\t0.5300"), std::string::npos) << rep.table;
  EXPECT_NE(rep.table.find("all\t0.5000"), std::string::npos) << rep.table;
  const auto csv = lines_of(rep.csv);
  EXPECT_EQ(csv[0], "run_id,bucket,k,accuracy,recall");
  EXPECT_EQ(csv[1], "mar,20,1,0.5010,0.2500");
}

TEST(Report, BucketsInLengthOrder) {
  const auto rep = make_report({make_run("mar", 0.5)});
  const auto p20 = rep.table.find("\n20\t"), p60 = rep.table.find("\n60\t"),
             p180 = rep.table.find("\n180\t"), p400 = rep.table.find("\n400\t");
  EXPECT_LT(p20, p60);
  EXPECT_LT(p60, p180);
  EXPECT_LT(p180, p400);
}

TEST(Report, IdenticalRunsHaveZeroDeltas) {
  const auto rep = make_report({make_run("a", 0.4), make_run("b", 0.4)});
  EXPECT_NE(rep.table.find("delta(b)"), std::string::npos);
  std::size_t deltas = 0;
  for (const auto& line : lines_of(rep.table)) {
    if (line.find('\t') == std::string::npos || line.find("delta") != std::string::npos) continue;
    if (line.rfind("bucket", 0) == 0 || line.rfind("k\t", 0) == 0) continue;
    EXPECT_EQ(line.substr(line.rfind('\t') + 1), "+0.0000") << line;
    ++deltas;
  }
  EXPECT_EQ(deltas, 5u + 4u);
}

TEST(Report, DeltaSign) {
  const auto rep = make_report({make_run("uniform", 0.3), make_run("retrieval", 0.45)});
  EXPECT_NE(rep.table.find("all\t0.3000\t0.4500\t+0.1500"), std::string::npos) << rep.table;
}

TEST(Report, CsvRowCount) {
  for (std::size_t runs = 1; runs <= 3; ++runs) {
    std::vector<RunSummary> rs;
    for (std::size_t i = 0; i < runs; ++i) rs.push_back(make_run("r" + std::to_string(i), 0.3));
    const auto csv = lines_of(make_report(rs).csv);
    EXPECT_EQ(csv.size() - 1, runs * 4 * 4);
  }
  const auto csv = lines_of(make_report({make_run("x", 0.3, {1, 5}, {"20", "60", "180"})}).csv);
  EXPECT_EQ(csv.size() - 1, 2u * 3u);
}

TEST(Report, SchemaMismatchListsKeys) {
  const auto a = make_run("a", 0.3);
  const auto b = make_run("b", 0.3, {1, 2, 5}, {"20", "60", "180", "999"});
  try {
    (void)make_report({a, b});
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("400"), std::string::npos) << msg;
    EXPECT_NE(msg.find("999"), std::string::npos) << msg;
    EXPECT_NE(msg.find("10"), std::string::npos) << msg;
    EXPECT_NE(msg.find("b:"), std::string::npos) << msg;
  }
  EXPECT_THROW((void)make_report({}), ValidationError);
}

TEST(Report, ParseSummaryMissingKeys) {
  nlohmann::json j{{"run_id", "x"}, {"selection", "uniform"}, {"k_test", 10}};
  try {
    (void)parse_summary(j, "m.jsonl");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("accuracy"), std::string::npos);
    EXPECT_NE(msg.find("by_k"), std::string::npos);
  }
}

TEST(Report, LoadsLastSummaryRecord) {
  TempDir dir;
  const nlohmann::json bucket{{"count", 3}, {"accuracy", 0.5}, {"recall", 0.25}};
  const nlohmann::json by_k{{"k", 5}, {"count", 3}, {"accuracy", 0.5}, {"recall", 0.25},
                            {"buckets", {{"20", bucket}}}};
  nlohmann::json summary{{"record", "summary"}, {"run_id", "first"}, {"selection", "retrieval"},
                         {"k_test", 5},         {"accuracy", 0.5},    {"recall", 0.25},
                         {"buckets", {{"20", bucket}}}, {"by_k", {by_k}}};
  std::string text = nlohmann::json{{"record", "epoch"}, {"epoch", 0}, {"loss", 1.0}}.dump() + "\n";
  text += summary.dump() + "\n";
  summary["run_id"] = "second";
  text += summary.dump() + "\n";
  io::atomic_write(dir / "metrics.jsonl", text);
  const auto run = load_metrics_file(dir / "metrics.jsonl");
  EXPECT_EQ(run.run_id, "second");
  EXPECT_EQ(run.by_k.at(5).at("20").accuracy, 0.5);

  io::atomic_write(dir / "bad.jsonl", "{\"record\": \"epoch\"}\n");
  EXPECT_THROW((void)load_metrics_file(dir / "bad.jsonl"), ValidationError);
}

}  // namespace
