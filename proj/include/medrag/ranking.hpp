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

#include <Eigen/Dense>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "medrag/corpus.hpp"
#include "medrag/embedding.hpp"

namespace medrag {

struct RankingParams {
  double lambda = 0.7;   // relevance vs. redundancy
  double alpha = 0.7;    // MMR vs. recency
  double epsilon = 1e-5;
  std::size_t k = 5;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct ScoredDocument {
  std::string pmid;
  int year = 0;
  double relevance = 0;
  double redundancy = 0;
  double mmr = 0;
  double tau = 0;
  double score = 0;
};

/// (year - min_year) / (max_year - min_year + epsilon).
inline double temporal_score(int year, int min_year, int max_year, double epsilon = 1e-5) {
  return static_cast<double>(year - min_year) / (static_cast<double>(max_year - min_year) + epsilon);
}

/// temporal_score against the year range of `pool`. Throws DomainError when
/// the pool is empty.
double temporal_score(const Document& doc, const EvidencePool& pool, double epsilon = 1e-5);

template <typename Scalar>
struct MmrTerms {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> relevance;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> redundancy;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mmr;
};

/// Batch MMR over candidate columns: relevance_i = cos(q, d_i), redundancy_i =
/// max over j != i of cos(d_i, d_j) (0 for a single candidate), and
/// mmr_i = lambda * relevance_i - (1 - lambda) * redundancy_i.
template <typename DerivedQ, typename DerivedD>
MmrTerms<typename DerivedD::Scalar> mmr_terms(const Eigen::MatrixBase<DerivedQ>& query,
                                              const Eigen::MatrixBase<DerivedD>& docs,
                                              typename DerivedD::Scalar lambda) {
  using Scalar = typename DerivedD::Scalar;
  MmrTerms<Scalar> t;
  const Eigen::Index n = docs.cols();
  t.relevance = cosine_to(query, docs);
  t.redundancy = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  if (n > 1) {
    auto gram = cosine_matrix(docs);
    gram.diagonal().setConstant(-std::numeric_limits<Scalar>::infinity());
    t.redundancy = gram.rowwise().maxCoeff();
  }
  t.mmr = lambda * t.relevance - (Scalar(1) - lambda) * t.redundancy;
  return t;
}

Eigen::VectorXd mmr_scores(const Embedding& query, std::span<const Embedding> docs, double lambda);

/// Scores every pool document and sorts by combined score descending, ties by
/// pmid ascending. `doc_vectors[i]` embeds `pool.documents[i]`.
std::vector<ScoredDocument> rank(const Embedding& query, const EvidencePool& pool,
                                 std::span<const Embedding> doc_vectors, const RankingParams& params = {});

/// The first min(k, |ranked|) entries.
std::vector<ScoredDocument> top_k_similar(std::span<const ScoredDocument> ranked, std::size_t k);

/// CSV with header pmid,year,relevance,redundancy,mmr,tau,score.
void write_score_table(std::ostream& out, std::span<const ScoredDocument> ranked);
std::vector<ScoredDocument> read_score_table(std::istream& in);

}  // namespace medrag
