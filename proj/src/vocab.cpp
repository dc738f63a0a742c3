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

#include "sevit/vocab.hpp"

#include <sstream>

#include "sevit/error.hpp"

namespace sevit {

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) push(w);
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) {
    if (!contains(w)) push(w);
  }
}

void Vocabulary::push(std::string word) {
  index_.emplace(word, words_.size());
  words_.push_back(std::move(word));
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.count(std::string(word)) != 0;
}

const std::string& Vocabulary::word(std::size_t id) const {
  if (id >= words_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(words_.size()));
  }
  return words_[id];
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& w : split_whitespace(text)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const std::size_t> ids) const {
  std::string out;
  for (auto t : ids) {
    if (t == kEos) break;
    if (t == kPad || t == kBos) continue;
    if (!out.empty()) out += ' ';
    out += word(t);
  }
  return out;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& w : words_) {
    out += w;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  auto words = split_whitespace(text);
  const Vocabulary reserved;
  if (words.size() < reserved.size()) throw LoadError("vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < reserved.size(); ++i) {
    if (words[i] != reserved.word(i)) {
      throw LoadError("vocabulary line " + std::to_string(i + 1) + " should be " + reserved.word(i));
    }
  }
  return Vocabulary(std::vector<std::string>(words.begin() + 4, words.end()));
}

}  // namespace sevit
