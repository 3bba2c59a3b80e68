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

#include "medrag/pos_tagger.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <nlohmann/json.hpp>

#include "medrag/error.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

constexpr std::string_view kStart1 = "-START-";
constexpr std::string_view kStart2 = "-START2-";
constexpr std::string_view kEnd1 = "-END-";
constexpr std::string_view kEnd2 = "-END2-";

// Tag dictionary admission: seen this often and almost always with one tag.
constexpr int kTagdictMinFreq = 4;
constexpr double kTagdictMinRatio = 0.97;

std::string normalize(const std::string& word) {
  if (word.find('-') != std::string::npos && word.front() != '-') return "!HYPHEN";
  if (word.size() == 4 && std::all_of(word.begin(), word.end(), is_digit)) return "!YEAR";
  if (is_digit(word.front())) return "!DIGITS";
  return to_lower(word);
}

std::string suffix3(std::string_view w) { return std::string(w.size() > 3 ? w.substr(w.size() - 3) : w); }

std::string shape(const std::string& word) {
  bool any_lower = false;
  bool any_upper = false;
  for (char c : word) {
    any_lower |= std::islower(static_cast<unsigned char>(c)) != 0;
    any_upper |= is_upper(c);
  }
  if (any_upper && !any_lower) return word.size() > 1 ? "XX" : "X";
  if (any_upper && is_upper(word.front())) return "Xx";
  if (any_lower) return "x";
  return "other";
}

std::vector<std::string> features(std::size_t i, const std::string& word,
                                  const std::vector<std::string>& context,
                                  const std::string& prev, const std::string& prev2) {
  i += 2;
  std::vector<std::string> f;
  f.reserve(16);
  f.emplace_back("bias");
  f.push_back("i suffix " + suffix3(word));
  f.push_back("i pref1 " + word.substr(0, 1));
  f.push_back("i shape " + shape(word));
  f.push_back("i-1 tag " + prev);
  f.push_back("i-2 tag " + prev2);
  f.push_back("i tag+i-2 tag " + prev + " " + prev2);
  f.push_back("i word " + context[i]);
  f.push_back("i-1 tag+i word " + prev + " " + context[i]);
  f.push_back("i-1 word " + context[i - 1]);
  f.push_back("i-1 suffix " + suffix3(context[i - 1]));
  f.push_back("i-2 word " + context[i - 2]);
  f.push_back("i+1 word " + context[i + 1]);
  f.push_back("i+1 suffix " + suffix3(context[i + 1]));
  f.push_back("i+2 word " + context[i + 2]);
  return f;
}

std::vector<std::string> make_context(const std::vector<std::string>& tokens) {
  std::vector<std::string> ctx;
  ctx.reserve(tokens.size() + 4);
  ctx.emplace_back(kStart1);
  ctx.emplace_back(kStart2);
  for (const auto& t : tokens) ctx.push_back(normalize(t));
  ctx.emplace_back(kEnd1);
  ctx.emplace_back(kEnd2);
  return ctx;
}

bool is_punct_char(char c) {
  return std::string_view(".,;:!?\"'()[]{}").find(c) != std::string_view::npos;
}

// Training-time state: raw weights plus the bookkeeping needed to average them.
struct Trainer {
  std::unordered_map<std::string, std::map<std::string, double>> weights;
  std::unordered_map<std::string, std::map<std::string, double>> totals;
  std::unordered_map<std::string, std::map<std::string, long>> stamps;
  long instances = 0;

  std::string predict(const std::vector<std::string>& feats,
                      const std::vector<std::string>& classes) const {
    std::map<std::string, double> scores;
    for (const auto& f : feats) {
      const auto it = weights.find(f);
      if (it == weights.end()) continue;
      for (const auto& [cls, w] : it->second) scores[cls] += w;
    }
    std::string best = classes.front();
    double best_score = -INFINITY;
    for (const auto& cls : classes) {
      const double s = scores.count(cls) ? scores.at(cls) : 0.0;
      if (s > best_score || (s == best_score && cls > best)) {
        best = cls;
        best_score = s;
      }
    }
    return best;
  }

  void bump(const std::string& f, const std::string& cls, double delta) {
    auto& w = weights[f][cls];
    auto& stamp = stamps[f][cls];
    totals[f][cls] += static_cast<double>(instances - stamp) * w;
    stamp = instances;
    w += delta;
  }

  void update(const std::string& truth, const std::string& guess,
              const std::vector<std::string>& feats) {
    ++instances;
    if (truth == guess) return;
    for (const auto& f : feats) {
      bump(f, truth, 1.0);
      bump(f, guess, -1.0);
    }
  }
};

}  // namespace

std::vector<TaggedSentence> read_tagged_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tagged corpus " + path.string());
  std::vector<TaggedSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    TaggedSentence s;
    std::istringstream words{std::string(t)};
    std::string tok;
    while (words >> tok) {
      const auto slash = tok.rfind('/');
      if (slash == std::string::npos || slash == 0 || slash + 1 == tok.size()) {
        throw ParseError(lineno, "token without tag: " + tok);
      }
      s.words.push_back(tok.substr(0, slash));
      s.tags.push_back(tok.substr(slash + 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> pos_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string chunk;
  while (in >> chunk) {
    std::size_t b = 0;
    std::size_t e = chunk.size();
    std::vector<std::string> tail;
    while (b < e && is_punct_char(chunk[b])) out.emplace_back(1, chunk[b++]);
    while (e > b && is_punct_char(chunk[e - 1])) tail.emplace_back(1, chunk[--e]);
    if (e > b) out.push_back(chunk.substr(b, e - b));
    out.insert(out.end(), tail.rbegin(), tail.rend());
  }
  return out;
}

PosTagger PosTagger::train(const std::vector<TaggedSentence>& sentences, int iterations,
                           unsigned seed) {
  PosTagger tagger;
  std::map<std::string, std::map<std::string, int>> counts;
  std::set<std::string> classes;
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      counts[s.words[i]][s.tags[i]]++;
      classes.insert(s.tags[i]);
    }
  }
  tagger.classes_.assign(classes.begin(), classes.end());
  for (const auto& [word, tags] : counts) {
    int total = 0;
    std::pair<std::string, int> mode{"", 0};
    for (const auto& [tag, n] : tags) {
      total += n;
      if (n > mode.second) mode = {tag, n};
    }
    if (total >= kTagdictMinFreq && static_cast<double>(mode.second) / total >= kTagdictMinRatio) {
      tagger.tagdict_[word] = mode.first;
    }
  }

  Trainer trainer;
  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937 gen(seed);
  for (int iter = 0; iter < iterations; ++iter) {
    for (const auto idx : order) {
      const auto& s = sentences[idx];
      const auto ctx = make_context(s.words);
      std::string prev(kStart1);
      std::string prev2(kStart2);
      for (std::size_t i = 0; i < s.words.size(); ++i) {
        std::string guess;
        if (const auto it = tagger.tagdict_.find(s.words[i]); it != tagger.tagdict_.end()) {
          guess = it->second;
        } else {
          const auto feats = features(i, s.words[i], ctx, prev, prev2);
          guess = trainer.predict(feats, tagger.classes_);
          trainer.update(s.tags[i], guess, feats);
        }
        prev2 = prev;
        prev = guess;
      }
    }
    // Fisher-Yates with raw engine output keeps the order portable across
    // standard library implementations.
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[gen() % i]);
  }

  for (auto& [feat, per_class] : trainer.weights) {
    for (auto& [cls, w] : per_class) {
      double total = trainer.totals[feat][cls];
      total += static_cast<double>(trainer.instances - trainer.stamps[feat][cls]) * w;
      const double averaged = std::round(total / static_cast<double>(trainer.instances) * 1e4) / 1e4;
      if (averaged != 0.0) tagger.weights_[feat][cls] = averaged;
    }
  }
  return tagger;
}

std::string PosTagger::predict(const std::vector<std::string>& feats) const {
  std::map<std::string, double> scores;
  for (const auto& f : feats) {
    const auto it = weights_.find(f);
    if (it == weights_.end()) continue;
    for (const auto& [cls, w] : it->second) scores[cls] += w;
  }
  std::string best = classes_.front();
  double best_score = -INFINITY;
  for (const auto& cls : classes_) {
    const auto it = scores.find(cls);
    const double s = it == scores.end() ? 0.0 : it->second;
    if (s > best_score || (s == best_score && cls > best)) {
      best = cls;
      best_score = s;
    }
  }
  return best;
}

std::vector<std::string> PosTagger::tag(const std::vector<std::string>& tokens) const {
  if (classes_.empty()) throw Error("POS tagger has no model loaded");
  std::vector<std::string> tags;
  tags.reserve(tokens.size());
  const auto ctx = make_context(tokens);
  std::string prev(kStart1);
  std::string prev2(kStart2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string t;
    if (const auto it = tagdict_.find(tokens[i]); it != tagdict_.end()) {
      t = it->second;
    } else {
      t = predict(features(i, tokens[i], ctx, prev, prev2));
    }
    tags.push_back(t);
    prev2 = prev;
    prev = t;
  }
  return tags;
}

void PosTagger::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["format"] = "medrag-pos/1";
  j["classes"] = classes_;
  const std::map<std::string, std::string> dict(tagdict_.begin(), tagdict_.end());
  j["tagdict"] = dict;
  const std::map<std::string, std::map<std::string, double>> w(weights_.begin(), weights_.end());
  j["weights"] = w;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write tagger weights " + path.string());
  out << j.dump(0) << '\n';
}

PosTagger PosTagger::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open tagger weights " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, "tagger weights " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "medrag-pos/1") {
    throw ParseError(0, "tagger weights " + path.string() + ": unknown format");
  }
  PosTagger t;
  t.classes_ = j.at("classes").get<std::vector<std::string>>();
  for (const auto& [k, v] : j.at("tagdict").items()) t.tagdict_[k] = v.get<std::string>();
  for (const auto& [feat, per_class] : j.at("weights").items()) {
    auto& slot = t.weights_[feat];
    for (const auto& [cls, w] : per_class.items()) slot[cls] = w.get<double>();
  }
  return t;
}

const PosTagger& PosTagger::bundled() {
  static const PosTagger tagger =
      load(std::filesystem::path(MEDRAG_DATA_DIR) / "pos" / "weights.json");
  return tagger;
}

std::vector<std::string> extract_content_terms(std::string_view query_text,
                                               const std::vector<std::string>& exclusions,
                                               const PosTagger& tagger) {
  if (trim(query_text).empty()) throw DomainError("extract_content_terms: empty query text");
  static const std::set<std::string, std::less<>> kAuxiliaries = {
      "am", "is", "are", "was", "were", "be", "been", "being", "'m", "'re", "'s",
      "do", "does", "did", "have", "has", "had"};
  static const std::set<std::string, std::less<>> kContentTags = {
      "NN", "NNS", "NNP", "NNPS", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ"};

  std::set<std::string> excluded;
  for (const auto& e : exclusions) excluded.insert(to_lower(e));

  const auto tokens = pos_tokenize(query_text);
  const auto tags = tagger.tag(tokens);
  std::vector<std::string> terms;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!kContentTags.count(tags[i])) continue;
    const auto lower = to_lower(tokens[i]);
    if (tags[i].front() == 'V' && kAuxiliaries.count(lower)) continue;
    if (excluded.count(lower)) continue;
    if (!seen.insert(lower).second) continue;
    terms.push_back(tokens[i]);
  }
  return terms;
}

std::vector<std::string> load_exclusion_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open exclusion list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return out;
}

}  // namespace medrag
