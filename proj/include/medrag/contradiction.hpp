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

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medrag/corpus.hpp"
#include "medrag/embedding.hpp"
#include "medrag/nli.hpp"

namespace medrag {

struct ContradictionParams {
  double theta = 0.75;                  // sentence similarity floor for pairing
  std::optional<double> abs_sim_gate;   // skip document pairs below this abstract similarity
  std::size_t workers = 1;
};

struct SentenceRef {
  std::string pmid;
  std::size_t index = 0;

  friend bool operator==(const SentenceRef&, const SentenceRef&) = default;
};

struct SentencePairEvidence {
  SentenceRef premise;
  SentenceRef hypothesis;
  double sentence_similarity = 0;
  double p_con = 0;

  friend bool operator==(const SentencePairEvidence&, const SentencePairEvidence&) = default;
};

struct PairScore {
  double abs_similarity = 0;
  double cnt = 0;
  std::optional<SentencePairEvidence> best_pair;

  friend bool operator==(const PairScore&, const PairScore&) = default;
};

using PmidPair = std::pair<std::string, std::string>;  // (premise doc, hypothesis doc)

struct ContradictionReport {
  std::string pool_ref;
  std::vector<std::string> pmids;             // pool order
  std::map<PmidPair, PairScore> pair_scores;  // every ordered pair of distinct pmids
  std::map<std::string, double> salience;     // empty for a single-document pool

  friend bool operator==(const ContradictionReport&, const ContradictionReport&) = default;
};

/// Sentence index pair (premise in the first document) and its similarity.
struct CandidatePair {
  std::size_t premise = 0;
  std::size_t hypothesis = 0;
  double similarity = 0;
};

/// Cosine of two abstract-level embeddings.
inline double abstract_similarity(const Embedding& a, const Embedding& b) { return cosine(a, b); }

/// Every (s, t) in a x b with cos(s, t) >= theta, in row-major order.
std::vector<CandidatePair> candidate_pairs(std::span<const Embedding> a_sentences,
                                           std::span<const Embedding> b_sentences, double theta = 0.75);

/// Peak contradiction probability; 0 when there are no candidates.
double cnt(std::span<const double> p_con);

/// Mean of cnt(pmid, d') over the rest of the pool. Throws DomainError for
/// a pool of fewer than two documents or an unknown pmid.
double salience(const ContradictionReport& report, const std::string& pmid);

/// Recomputes report.salience from report.pair_scores.
void compute_salience(ContradictionReport& report);

struct ContrastSets {
  std::vector<std::string> most;   // salience descending
  std::vector<std::string> least;  // salience ascending
};

/// Top-k by salience in each direction, ties by pmid ascending. A
/// single-document pool yields that document in both lists.
ContrastSets contradiction_contexts(const ContradictionReport& report, std::size_t k);

/// Scores every ordered document pair of `pool`. `sim_encoder` embeds whole
/// abstracts and single sentences; NLI requests go out in one deduplicated list.
ContradictionReport score_pool(const EvidencePool& pool, const EmbeddingProvider& sim_encoder,
                               const NliProvider& nli, const ContradictionParams& params = {});

/// CSV header pmid_a,pmid_b,abs_sim,cnt,best_premise_idx,best_hypothesis_idx,best_sim,best_pcon;
/// the best_* fields are empty when the pair had no candidates.
void write_report_csv(std::ostream& out, const ContradictionReport& report);
/// `pmids` gives the pool (and its order); salience is recomputed.
ContradictionReport read_report_csv(std::istream& in, std::string pool_ref, std::vector<std::string> pmids);

/// query_ref,pmid,salience rows for a set of reports.
void write_salience_csv(std::ostream& out, const std::vector<const ContradictionReport*>& reports);

}  // namespace medrag
