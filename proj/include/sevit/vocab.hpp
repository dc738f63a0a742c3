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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sevit {

// Fixed toy vocabulary with whitespace tokenization. Ids 0-3 are reserved.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  Vocabulary();
  // `words` are appended after the reserved tokens; duplicates are dropped.
  explicit Vocabulary(const std::vector<std::string>& words);

  std::size_t size() const { return words_.size(); }
  std::size_t id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(std::size_t id) const;

  std::vector<std::size_t> encode(std::string_view text) const;
  // Stops at EOS; reserved tokens other than UNK are skipped.
  std::string decode(std::span<const std::size_t> ids) const;

  // One token per line, reserved tokens included.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);

 private:
  void push(std::string word);

  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace sevit
