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

#include "medrag/ranking.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <ostream>

#include "medrag/csv.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

const csv::Row kScoreHeader = {"pmid", "year", "relevance", "redundancy", "mmr", "tau", "score"};

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ParseError(0, "not a number: '" + s + "'");
  return v;
}

}  // namespace

void RankingParams::validate() const {
  if (!(lambda >= 0 && lambda <= 1)) throw ConfigError("lambda must lie in [0, 1]");
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (k < 1) throw ConfigError("k must be at least 1");
}

double temporal_score(const Document& doc, const EvidencePool& pool, double epsilon) {
  if (pool.documents.empty()) throw DomainError("temporal_score: empty pool");
  const auto [lo, hi] = std::minmax_element(pool.documents.begin(), pool.documents.end(),
                                            [](const Document& a, const Document& b) { return a.year < b.year; });
  return temporal_score(doc.year, lo->year, hi->year, epsilon);
}

Eigen::VectorXd mmr_scores(const Embedding& query, std::span<const Embedding> docs, double lambda) {
  if (docs.empty()) throw DomainError("mmr_scores: empty pool");
  return mmr_terms(query.values(), stack_columns(docs), lambda).mmr;
}

std::vector<ScoredDocument> rank(const Embedding& query, const EvidencePool& pool,
                                 std::span<const Embedding> doc_vectors, const RankingParams& params) {
  params.validate();
  if (doc_vectors.size() != pool.documents.size()) {
    throw DomainError("rank: " + std::to_string(doc_vectors.size()) + " vectors for " +
                      std::to_string(pool.documents.size()) + " documents");
  }
  if (pool.documents.empty()) return {};

  const auto terms = mmr_terms(query.values(), stack_columns(doc_vectors), params.lambda);
  int min_year = pool.documents.front().year;
  int max_year = min_year;
  for (const auto& d : pool.documents) {
    min_year = std::min(min_year, d.year);
    max_year = std::max(max_year, d.year);
  }

  std::vector<ScoredDocument> out;
  out.reserve(pool.documents.size());
  for (std::size_t i = 0; i < pool.documents.size(); ++i) {
    const auto ix = static_cast<Eigen::Index>(i);
    ScoredDocument s;
    s.pmid = pool.documents[i].pmid;
    s.year = pool.documents[i].year;
    s.relevance = terms.relevance(ix);
    s.redundancy = terms.redundancy(ix);
    s.mmr = terms.mmr(ix);
    s.tau = temporal_score(s.year, min_year, max_year, params.epsilon);
    s.score = params.alpha * s.mmr + (1 - params.alpha) * s.tau;
    out.push_back(std::move(s));
  }
  std::sort(out.begin(), out.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
    if (a.score != b.score) return a.score > b.score;
    return pmid_less(a.pmid, b.pmid);
  });
  return out;
}

std::vector<ScoredDocument> top_k_similar(std::span<const ScoredDocument> ranked, std::size_t k) {
  if (k < 1) throw DomainError("top_k_similar: k must be at least 1");
  const auto n = std::min(k, ranked.size());
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n)};
}

void write_score_table(std::ostream& out, std::span<const ScoredDocument> ranked) {
  csv::write_row(out, kScoreHeader);
  for (const auto& s : ranked) {
    csv::write_row(out, {s.pmid, std::to_string(s.year), fmt::format("{}", s.relevance),
                         fmt::format("{}", s.redundancy), fmt::format("{}", s.mmr), fmt::format("{}", s.tau),
                         fmt::format("{}", s.score)});
  }
}

std::vector<ScoredDocument> read_score_table(std::istream& in) {
  std::vector<ScoredDocument> out;
  for (const auto& r : csv::read_table(in, kScoreHeader)) {
    ScoredDocument s;
    s.pmid = r[0];
    s.year = static_cast<int>(parse_double(r[1]));
    s.relevance = parse_double(r[2]);
    s.redundancy = parse_double(r[3]);
    s.mmr = parse_double(r[4]);
    s.tau = parse_double(r[5]);
    s.score = parse_double(r[6]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace medrag
