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

#include "sevit/report.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>

#include "sevit/error.hpp"
#include "sevit/io.hpp"

namespace sevit::report {
namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  std::string missing;
  for (const char* k : keys) {
    if (!j.contains(k)) missing += (missing.empty() ? "" : ", ") + std::string(k);
  }
  if (!missing.empty()) throw ValidationError(where + ": missing keys: " + missing);
}

Cell parse_cell(const json& j, const std::string& where) {
  require_keys(j, {"accuracy", "recall"}, where);
  return {j.at("accuracy").get<double>(), j.at("recall").get<double>()};
}

std::map<std::string, Cell> parse_buckets(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": buckets must be an object");
  std::map<std::string, Cell> out;
  for (const auto& [label, cell] : j.items()) out[label] = parse_cell(cell, where + "." + label);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string signed_fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", v);
  return buf;
}

template <class Key>
std::set<Key> keys_of(const auto& m) {
  std::set<Key> s;
  for (const auto& [k, v] : m) s.insert(k);
  return s;
}

template <class Key>
std::string describe_diff(const std::set<Key>& a, const std::set<Key>& b) {
  std::ostringstream os;
  bool first = true;
  for (const auto& k : a) {
    if (!b.contains(k)) os << (first ? "" : ", ") << k, first = false;
  }
  for (const auto& k : b) {
    if (!a.contains(k)) os << (first ? "" : ", ") << k, first = false;
  }
  return os.str();
}

void check_schema(const std::vector<RunSummary>& runs) {
  const auto& ref = runs.front();
  const auto ref_buckets = keys_of<std::string>(ref.buckets);
  const auto ref_k = keys_of<std::size_t>(ref.by_k);
  std::string problems;
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& r = runs[i];
    const auto b = describe_diff(ref_buckets, keys_of<std::string>(r.buckets));
    if (!b.empty()) problems += "\n  " + r.run_id + ": buckets differ in {" + b + "}";
    const auto k = describe_diff(ref_k, keys_of<std::size_t>(r.by_k));
    if (!k.empty()) problems += "\n  " + r.run_id + ": k values differ in {" + k + "}";
    if (r.k_test != ref.k_test) {
      problems += "\n  " + r.run_id + ": k_test " + std::to_string(r.k_test) + " vs " +
                  std::to_string(ref.k_test);
    }
  }
  if (!problems.empty()) {
    throw ValidationError("metrics files do not share a schema (reference " + ref.run_id + "):" +
                          problems);
  }
}

// Numeric labels sort by magnitude ("20" before "180").
std::vector<std::string> ordered(const std::map<std::string, Cell>& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return out;
}

std::string label(const RunSummary& r) { return r.run_id + " [" + r.selection + "]"; }

void header(std::ostringstream& os, const std::string& first, const std::vector<RunSummary>& runs) {
  os << first;
  for (const auto& r : runs) os << '\t' << label(r);
  for (std::size_t i = 1; i < runs.size(); ++i) os << "\tdelta(" << runs[i].run_id << ")";
  os << '\n';
}

void row(std::ostringstream& os, const std::string& name, const std::vector<double>& values) {
  os << name;
  for (double v : values) os << '\t' << fmt(v);
  for (std::size_t i = 1; i < values.size(); ++i) os << '\t' << signed_fmt(values[i] - values[0]);
  os << '\n';
}

}  // namespace

RunSummary parse_summary(const json& record, const std::string& source) {
  require_keys(record, {"run_id", "selection", "k_test", "accuracy", "recall", "buckets", "by_k"},
               source);
  try {
    RunSummary s;
    s.run_id = record.at("run_id").get<std::string>();
    s.mode = record.value("mode", std::string());
    s.selection = record.at("selection").get<std::string>();
    s.k_test = record.at("k_test").get<std::size_t>();
    s.accuracy = record.at("accuracy").get<double>();
    s.recall = record.at("recall").get<double>();
    s.buckets = parse_buckets(record.at("buckets"), source + ": buckets");
    for (const auto& entry : record.at("by_k")) {
      require_keys(entry, {"k", "accuracy", "recall", "buckets"}, source + ": by_k");
      const auto k = entry.at("k").get<std::size_t>();
      s.by_k[k] = parse_buckets(entry.at("buckets"), source + ": by_k[" + std::to_string(k) + "]");
      s.by_k_overall[k] = parse_cell(entry, source);
    }
    return s;
  } catch (const json::exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

RunSummary load_metrics_file(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  std::optional<json> last;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (j.value("record", std::string()) == "summary") last = std::move(j);
  }
  if (!last) throw ValidationError(path.string() + ": no summary record");
  return parse_summary(*last, path.string());
}

Report make_report(const std::vector<RunSummary>& runs) {
  if (runs.empty()) throw ValidationError("report needs at least one metrics file");
  check_schema(runs);
  const auto& ref = runs.front();
  std::ostringstream t;

  t << "Accuracy by video length (k_test=" << ref.k_test << ")\n";
  header(t, "bucket", runs);
  for (const auto& bucket : ordered(ref.buckets)) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.buckets.at(bucket).accuracy);
    row(t, bucket, v);
  }
  {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.accuracy);
    row(t, "all", v);
  }

  t << "\nAccuracy by test-time k\n";
  header(t, "k", runs);
  for (const auto& [k, unused] : ref.by_k) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.by_k_overall.at(k).accuracy);
    row(t, std::to_string(k), v);
  }

  std::ostringstream c;
  c << "run_id,bucket,k,accuracy,recall\n";
  for (const auto& r : runs) {
    for (const auto& [k, buckets] : r.by_k) {
      for (const auto& bucket : ordered(buckets)) {
        const auto& cell = buckets.at(bucket);
        c << r.run_id << ',' << bucket << ',' << k << ',' << fmt(cell.accuracy) << ','
          << fmt(cell.recall) << '\n';
      }
    }
  }
  return {t.str(), c.str()};
}

}  // namespace sevit::report
