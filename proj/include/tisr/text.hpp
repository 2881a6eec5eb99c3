/* Copyright 2026 The tisr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tisr/error.hpp"

namespace tisr {

/// Dense word ids. PAD = 0, EOS = 1, UNK = 2, then corpus words in
/// lexicographic order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kEos = 1;
  static constexpr int kUnk = 2;

  Vocabulary() : tokens_{"<pad>", "<eos>", "<unk>"} { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 3 || tokens_[0] != "<pad>" || tokens_[1] != "<eos>" ||
        tokens_[2] != "<unk>") {
      throw InputError("vocabulary must start with <pad>, <eos>, <unk>");
    }
    reindex();
  }

  int id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
  }

  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

/// Lowercased whitespace-separated words.
inline std::vector<std::string> split_words(const std::string& caption) {
  std::vector<std::string> words;
  std::istringstream in(caption);
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.push_back(w);
  }
  return words;
}

inline Vocabulary build_vocab(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw InputError("build_vocab: empty corpus");
  std::set<std::string> words;
  for (const auto& caption : corpus)
    for (auto& w : split_words(caption)) words.insert(std::move(w));
  if (words.empty()) throw InputError("build_vocab: corpus contains no words");
  std::vector<std::string> tokens{"<pad>", "<eos>", "<unk>"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

/// Fixed-length id sequence: words, then exactly one EOS, then PAD.
struct TokenSequence {
  std::vector<int> ids;
  std::string caption;

  std::size_t eos_position() const {
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), Vocabulary::kEos) -
                                    ids.begin());
  }
  std::size_t length() const { return ids.size(); }
};

inline TokenSequence tokenize(const std::string& caption, const Vocabulary& vocab,
                              std::size_t max_len) {
  if (max_len < 2) throw ContractError("tokenize: max_len must be at least 2");
  TokenSequence seq;
  seq.caption = caption;
  seq.ids.assign(max_len, Vocabulary::kPad);
  const auto words = split_words(caption);
  const std::size_t n = std::min(words.size(), max_len - 1);
  for (std::size_t i = 0; i < n; ++i) seq.ids[i] = vocab.id(words[i]);
  seq.ids[n] = Vocabulary::kEos;
  return seq;
}

}  // namespace tisr
