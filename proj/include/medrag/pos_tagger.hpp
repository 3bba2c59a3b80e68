// Copyright 2026 The medrag Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medrag {

struct TaggedSentence {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

/// Reads `word/TAG word/TAG ...` lines; '#' starts a comment line.
std::vector<TaggedSentence> read_tagged_corpus(const std::filesystem::path& path);

/// Whitespace split with leading/trailing punctuation peeled into tokens.
std::vector<std::string> pos_tokenize(std::string_view text);

/// Averaged-perceptron part-of-speech tagger over Penn Treebank tags.
///
/// Context features follow the classic greedy left-to-right design (word
/// identity, affixes, the two previous predicted tags, a +-2 word window)
/// plus a capitalisation-shape feature so unseen upper-case drug names are
/// recognised as proper nouns. Frequent unambiguous words bypass the model
/// through a tag dictionary.
class PosTagger {
 public:
  PosTagger() = default;

  static PosTagger train(const std::vector<TaggedSentence>& sentences, int iterations = 10,
                         unsigned seed = 7);
  static PosTagger load(const std::filesystem::path& weights);
  /// Weights shipped under data/pos/.
  static const PosTagger& bundled();

  void save(const std::filesystem::path& weights) const;

  std::vector<std::string> tag(const std::vector<std::string>& tokens) const;

  std::size_t feature_count() const { return weights_.size(); }

 private:
  using Weights = std::unordered_map<std::string, std::map<std::string, double>>;

  std::string predict(const std::vector<std::string>& features) const;

  std::vector<std::string> classes_;
  std::unordered_map<std::string, std::string> tagdict_;
  Weights weights_;
};

/// Tokens tagged as common/proper nouns or main verbs, minus exclusions
/// (case-insensitive) and auxiliaries; first occurrence wins on duplicates.
/// Throws DomainError on empty input.
std::vector<std::string> extract_content_terms(std::string_view query_text,
                                               const std::vector<std::string>& exclusions,
                                               const PosTagger& tagger = PosTagger::bundled());

/// One name per line, '#' comments ignored.
std::vector<std::string> load_exclusion_list(const std::filesystem::path& path);

}  // namespace medrag
