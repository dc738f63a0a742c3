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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace sevit::report {

struct Cell {
  double accuracy = 0.0;
  double recall = 0.0;
};

// The summary record of one metrics.jsonl file.
struct RunSummary {
  std::string run_id;
  std::string mode;
  std::string selection;
  std::size_t k_test = 0;
  double accuracy = 0.0;
  double recall = 0.0;
  std::map<std::string, Cell> buckets;                           // at k_test
  std::map<std::size_t, std::map<std::string, Cell>> by_k;       // k -> bucket -> cell
  std::map<std::size_t, Cell> by_k_overall;
};

RunSummary parse_summary(const nlohmann::json& record, const std::string& source);
// Reads the last record with "record": "summary".
RunSummary load_metrics_file(const std::filesystem::path& path);

struct Report {
  std::string table;  // human-readable, accuracy by length and by k
  std::string csv;    // run_id,bucket,k,accuracy,recall
};

// All runs must agree on bucket labels and k values; otherwise a
// ValidationError lists the keys that differ. Deltas are against runs[0].
Report make_report(const std::vector<RunSummary>& runs);

}  // namespace sevit::report
