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

#include "medrag/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "medrag/text.hpp"

namespace medrag {
namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, int> ngram_counts(const std::vector<std::string>& toks, int n) {
  std::map<Ngram, int> out;
  if (n <= 0 || toks.size() < static_cast<std::size_t>(n)) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
    out[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i) + n)]++;
  }
  return out;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap == 0 || cand_total == 0 || ref_total == 0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2 * p * r / (p + r);
}

std::optional<Eigen::VectorXd> mean_vector(const std::vector<std::string>& toks, const WordVectorProvider& wv) {
  if (toks.empty()) return std::nullopt;
  const auto vecs = wv.lookup(toks);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(wv.dimension()));
  std::size_t used = 0;
  for (const auto& v : vecs) {
    if (v.size() != sum.size()) throw ProtocolError("word vector of wrong dimension");
    if (v.isZero(0)) continue;
    sum += v;
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum / static_cast<double>(used);
}

}  // namespace

double rouge_n(std::string_view reference, std::string_view candidate, int n) {
  const auto ref = ngram_counts(word_tokens(reference), n);
  const auto cand = ngram_counts(word_tokens(candidate), n);
  double overlap = 0, ref_total = 0, cand_total = 0;
  for (const auto& [g, c] : ref) ref_total += c;
  for (const auto& [g, c] : cand) {
    cand_total += c;
    const auto it = ref.find(g);
    if (it != ref.end()) overlap += std::min(c, it->second);
  }
  return f1(overlap, cand_total, ref_total);
}

double rouge_l(std::string_view reference, std::string_view candidate) {
  const auto a = word_tokens(reference);
  const auto b = word_tokens(candidate);
  if (a.empty() || b.empty()) return 0.0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(static_cast<double>(prev[b.size()]), static_cast<double>(b.size()), static_cast<double>(a.size()));
}

TokenDistribution token_distribution(std::string_view text) {
  const auto toks = word_tokens(text);
  if (toks.empty()) throw DomainError("token_distribution: no tokens");
  TokenDistribution d;
  for (const auto& t : toks) d[t] += 1.0;
  for (auto& [t, v] : d) v /= static_cast<double>(toks.size());
  return d;
}

double jsd(const TokenDistribution& p, const TokenDistribution& q) {
  std::map<std::string, std::pair<double, double>> joint;
  for (const auto& [t, v] : p) joint[t].first = v;
  for (const auto& [t, v] : q) joint[t].second = v;
  double out = 0;
  for (const auto& [t, pq] : joint) {
    const auto [pv, qv] = pq;
    const double m = 0.5 * (pv + qv);
    if (pv > 0) out += 0.5 * pv * std::log(pv / m);
    if (qv > 0) out += 0.5 * qv * std::log(qv / m);
  }
  return std::max(0.0, out);
}

double kld(const TokenDistribution& p, const TokenDistribution& q, double smoothing) {
  std::map<std::string, std::pair<double, double>> joint;
  for (const auto& [t, v] : p) joint[t].first = v;
  for (const auto& [t, v] : q) joint[t].second = v;
  const double z = 1.0 + smoothing * static_cast<double>(joint.size());
  double out = 0;
  for (const auto& [t, pq] : joint) {
    const auto [pv, qv] = pq;
    if (pv > 0) out += pv * std::log(pv / ((qv + smoothing) / z));
  }
  return std::max(0.0, out);
}

Similarity embedding_similarity(std::string_view reference, std::string_view candidate,
                                const EmbeddingProvider& provider) {
  const auto v = embed_batch(provider, {std::string(reference), std::string(candidate)});
  return {cosine(v[0], v[1]), v[0].values().dot(v[1].values())};
}

FileBackedWordVectors::FileBackedWordVectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t count = 0;
  if (!std::getline(in, line)) throw ParseError(1, path.string() + ": missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> count >> dimension_) || dimension_ == 0) throw ParseError(1, path.string() + ": bad header");
  }
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    Eigen::VectorXd v(static_cast<Eigen::Index>(dimension_));
    for (std::size_t k = 0; k < dimension_; ++k) {
      if (!(ls >> v(static_cast<Eigen::Index>(k)))) {
        throw ParseError(n, path.string() + ": expected " + std::to_string(dimension_) + " values");
      }
    }
    table_.insert_or_assign(tok, std::move(v));
  }
  if (table_.size() != count) {
    throw ParseError(0, path.string() + ": header announces " + std::to_string(count) + " vectors, found " +
                            std::to_string(table_.size()));
  }
}

FileBackedWordVectors::FileBackedWordVectors(std::unordered_map<std::string, Eigen::VectorXd> table,
                                             std::size_t dimension)
    : table_(std::move(table)), dimension_(dimension) {}

std::vector<Eigen::VectorXd> FileBackedWordVectors::lookup(const std::vector<std::string>& tokens) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto it = table_.find(t);
    out.push_back(it == table_.end() ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dimension_)) : it->second);
  }
  return out;
}

HttpWordVectors::HttpWordVectors(std::string base_url, std::string model_tag, std::size_t dimension,
                                 RetryPolicy retry)
    : embedder_(std::move(base_url), std::move(model_tag), dimension, 256, std::move(retry)) {}

std::vector<Eigen::VectorXd> HttpWordVectors::lookup(const std::vector<std::string>& tokens) const {
  std::vector<Eigen::VectorXd> out;
  if (tokens.empty()) return out;
  for (const auto& e : embedder_.embed(tokens)) out.push_back(e.values());
  return out;
}

std::optional<Similarity> vsim(std::string_view reference, std::string_view candidate,
                               const WordVectorProvider& provider) {
  const auto a = mean_vector(word_tokens(reference), provider);
  const auto b = mean_vector(word_tokens(candidate), provider);
  if (!a || !b) return std::nullopt;
  return Similarity{cosine(*a, *b), a->dot(*b)};
}

std::array<std::optional<double>, kMetricCount> as_array(const MetricScores& s) {
  return {s.r1, s.r2, s.rl, s.bert_cos, s.bert_dot, s.vsim_cos, s.vsim_dot, s.jsd, s.kld};
}

MetricScores from_array(const std::array<std::optional<double>, kMetricCount>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7], a[8]};
}

MetricScores score_answer(std::string_view reference, std::string_view candidate,
                          const EmbeddingProvider& encoder, const WordVectorProvider& word_vectors) {
  MetricScores s;
  s.r1 = rouge_n(reference, candidate, 1);
  s.r2 = rouge_n(reference, candidate, 2);
  s.rl = rouge_l(reference, candidate);
  if (!trim(reference).empty() && !trim(candidate).empty()) {
    try {
      const auto e = embedding_similarity(reference, candidate, encoder);
      s.bert_cos = e.cos;
      s.bert_dot = e.dot;
    } catch (const DomainError&) {
    }
  }
  if (const auto v = vsim(reference, candidate, word_vectors)) {
    s.vsim_cos = v->cos;
    s.vsim_dot = v->dot;
  }
  if (!word_tokens(reference).empty() && !word_tokens(candidate).empty()) {
    const auto p = token_distribution(reference);
    const auto q = token_distribution(candidate);
    s.jsd = jsd(p, q);
    s.kld = kld(p, q);
  }
  return s;
}

MetricScores macro_average(const std::vector<std::pair<int, MetricScores>>& per_query) {
  std::array<std::optional<double>, kMetricCount> out;
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    std::map<int, std::pair<double, std::size_t>> by_medicine;
    for (const auto& [med, scores] : per_query) {
      if (const auto v = as_array(scores)[m]) {
        auto& acc = by_medicine[med];
        acc.first += *v;
        acc.second++;
      }
    }
    if (by_medicine.empty()) continue;
    double sum = 0;
    for (const auto& [med, acc] : by_medicine) sum += acc.first / static_cast<double>(acc.second);
    out[m] = sum / static_cast<double>(by_medicine.size());
  }
  return from_array(out);
}

}  // namespace medrag
