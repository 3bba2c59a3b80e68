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

#include "medrag/contradiction.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <ostream>
#include <set>
#include <unordered_map>

#include "medrag/csv.hpp"
#include "medrag/hashing.hpp"
#include "medrag/parallel.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

const csv::Row kReportHeader = {"pmid_a",           "pmid_b",              "abs_sim",  "cnt",
                                "best_premise_idx", "best_hypothesis_idx", "best_sim", "best_pcon"};

constexpr std::size_t kNliChunk = 32;

double to_double(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (s.empty() || used != s.size()) throw ParseError(line, "not a number: '" + s + "'");
  return v;
}

std::vector<std::string> ranked_by_salience(const ContradictionReport& report, bool descending) {
  std::vector<std::string> ids = report.pmids;
  std::sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    const double sa = report.salience.at(a);
    const double sb = report.salience.at(b);
    if (sa != sb) return descending ? sa > sb : sa < sb;
    return pmid_less(a, b);
  });
  return ids;
}

// A pair awaiting NLI: which document pair it belongs to and where.
struct PendingPair {
  std::size_t a = 0;
  std::size_t b = 0;
  CandidatePair cand;
  std::size_t request = 0;  // index into the deduplicated NLI request list
};

}  // namespace

std::vector<CandidatePair> candidate_pairs(std::span<const Embedding> a_sentences,
                                           std::span<const Embedding> b_sentences, double theta) {
  std::vector<CandidatePair> out;
  if (a_sentences.empty() || b_sentences.empty()) return out;
  const auto a = normalized_columns(stack_columns(a_sentences));
  const auto b = normalized_columns(stack_columns(b_sentences));
  if (a.rows() != b.rows()) throw DomainError("cosine: dimension mismatch");
  const Eigen::MatrixXd sims = a.transpose() * b;
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    for (Eigen::Index j = 0; j < sims.cols(); ++j) {
      if (sims(i, j) >= theta) {
        out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), sims(i, j)});
      }
    }
  }
  return out;
}

double cnt(std::span<const double> p_con) {
  if (p_con.empty()) return 0.0;
  return *std::max_element(p_con.begin(), p_con.end());
}

double salience(const ContradictionReport& report, const std::string& pmid) {
  if (report.pmids.size() < 2) throw DomainError("salience is undefined for a pool of one document");
  if (std::find(report.pmids.begin(), report.pmids.end(), pmid) == report.pmids.end()) {
    throw DomainError("salience: " + pmid + " is not in pool " + report.pool_ref);
  }
  double sum = 0;
  for (const auto& other : report.pmids) {
    if (other == pmid) continue;
    const auto it = report.pair_scores.find({pmid, other});
    if (it == report.pair_scores.end()) {
      throw IntegrityError("contradiction report " + report.pool_ref + " lacks pair " + pmid + "," + other);
    }
    sum += it->second.cnt;
  }
  return sum / static_cast<double>(report.pmids.size() - 1);
}

void compute_salience(ContradictionReport& report) {
  report.salience.clear();
  if (report.pmids.size() < 2) return;
  for (const auto& p : report.pmids) report.salience[p] = salience(report, p);
}

ContrastSets contradiction_contexts(const ContradictionReport& report, std::size_t k) {
  if (k < 1) throw DomainError("contradiction_contexts: k must be at least 1");
  ContrastSets out;
  if (report.pmids.size() == 1) {
    out.most = out.least = report.pmids;
    return out;
  }
  out.most = ranked_by_salience(report, true);
  out.least = ranked_by_salience(report, false);
  if (out.most.size() > k) out.most.resize(k);
  if (out.least.size() > k) out.least.resize(k);
  return out;
}

ContradictionReport score_pool(const EvidencePool& pool, const EmbeddingProvider& sim_encoder,
                               const NliProvider& nli, const ContradictionParams& params) {
  ContradictionReport report;
  report.pool_ref = pool.query_ref;
  const auto& docs = pool.documents;
  for (const auto& d : docs) report.pmids.push_back(d.pmid);
  if (docs.size() < 2) return report;

  // One embedding request for every distinct abstract and sentence.
  std::vector<std::string> texts;
  std::unordered_map<std::string, std::size_t> slot_of;
  auto intern = [&](const std::string& t) {
    auto [it, fresh] = slot_of.emplace(t, texts.size());
    if (fresh) texts.push_back(t);
    return it->second;
  };
  std::vector<std::size_t> abstract_slot;
  std::vector<std::vector<std::size_t>> sentence_index;  // kept sentence -> original index
  std::vector<std::vector<std::size_t>> sentence_slot;
  for (const auto& d : docs) {
    abstract_slot.push_back(intern(d.text));
    auto& idx = sentence_index.emplace_back();
    auto& slots = sentence_slot.emplace_back();
    for (std::size_t s = 0; s < d.sentences.size(); ++s) {
      if (trim(d.sentences[s]).empty()) continue;
      idx.push_back(s);
      slots.push_back(intern(d.sentences[s]));
    }
  }
  const auto vectors = embed_batch(sim_encoder, texts);
  std::vector<std::vector<Embedding>> sentence_vecs(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (auto slot : sentence_slot[i]) sentence_vecs[i].push_back(vectors[slot]);
  }

  std::vector<NliPair> requests;
  std::unordered_map<std::string, std::size_t> request_of;
  std::vector<PendingPair> pending;
  for (std::size_t a = 0; a < docs.size(); ++a) {
    for (std::size_t b = 0; b < docs.size(); ++b) {
      if (a == b) continue;
      PairScore ps;
      ps.abs_similarity = abstract_similarity(vectors[abstract_slot[a]], vectors[abstract_slot[b]]);
      report.pair_scores[{docs[a].pmid, docs[b].pmid}] = ps;
      if (params.abs_sim_gate && ps.abs_similarity < *params.abs_sim_gate) continue;
      for (const auto& c : candidate_pairs(sentence_vecs[a], sentence_vecs[b], params.theta)) {
        CandidatePair orig{sentence_index[a][c.premise], sentence_index[b][c.hypothesis], c.similarity};
        const auto& premise = docs[a].sentences[orig.premise];
        const auto& hypothesis = docs[b].sentences[orig.hypothesis];
        auto [it, fresh] = request_of.emplace(pair_hash(premise, hypothesis), requests.size());
        if (fresh) requests.push_back({premise, hypothesis});
        pending.push_back({a, b, orig, it->second});
      }
    }
  }

  std::vector<NliProbs> probs(requests.size());
  const std::size_t chunks = (requests.size() + kNliChunk - 1) / kNliChunk;
  parallel_for(chunks, params.workers, [&](std::size_t c) {
    const auto lo = c * kNliChunk;
    const auto hi = std::min(requests.size(), lo + kNliChunk);
    std::vector<NliPair> batch(requests.begin() + static_cast<std::ptrdiff_t>(lo),
                               requests.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto got = nli.score(batch);
    if (got.size() != batch.size()) throw ProtocolError("NLI provider returned a short batch");
    for (std::size_t i = 0; i < got.size(); ++i) {
      validate_probs(got[i]);
      probs[lo + i] = got[i];
    }
  });

  for (const auto& p : pending) {
    auto& ps = report.pair_scores.at({docs[p.a].pmid, docs[p.b].pmid});
    const double pcon = probs[p.request].con;
    if (!ps.best_pair || pcon > ps.best_pair->p_con) {
      ps.best_pair = SentencePairEvidence{{docs[p.a].pmid, p.cand.premise},
                                          {docs[p.b].pmid, p.cand.hypothesis},
                                          p.cand.similarity,
                                          pcon};
      ps.cnt = pcon;
    }
  }
  compute_salience(report);
  return report;
}

void write_report_csv(std::ostream& out, const ContradictionReport& report) {
  csv::write_row(out, kReportHeader);
  for (const auto& a : report.pmids) {
    for (const auto& b : report.pmids) {
      if (a == b) continue;
      const auto& ps = report.pair_scores.at({a, b});
      csv::Row row = {a, b, fmt::format("{}", ps.abs_similarity), fmt::format("{}", ps.cnt), "", "", "", ""};
      if (ps.best_pair) {
        row[4] = std::to_string(ps.best_pair->premise.index);
        row[5] = std::to_string(ps.best_pair->hypothesis.index);
        row[6] = fmt::format("{}", ps.best_pair->sentence_similarity);
        row[7] = fmt::format("{}", ps.best_pair->p_con);
      }
      csv::write_row(out, row);
    }
  }
}

ContradictionReport read_report_csv(std::istream& in, std::string pool_ref, std::vector<std::string> pmids) {
  ContradictionReport report;
  report.pool_ref = std::move(pool_ref);
  report.pmids = std::move(pmids);
  const std::set<std::string> known(report.pmids.begin(), report.pmids.end());
  std::size_t line = 1;
  for (const auto& r : csv::read_table(in, kReportHeader)) {
    ++line;
    if (!known.count(r[0]) || !known.count(r[1]) || r[0] == r[1]) {
      throw IntegrityError("line " + std::to_string(line) + ": pair " + r[0] + "," + r[1] +
                           " does not belong to pool " + report.pool_ref);
    }
    PairScore ps;
    ps.abs_similarity = to_double(r[2], line);
    ps.cnt = to_double(r[3], line);
    if (!r[4].empty()) {
      ps.best_pair = SentencePairEvidence{{r[0], static_cast<std::size_t>(std::stoull(r[4]))},
                                          {r[1], static_cast<std::size_t>(std::stoull(r[5]))},
                                          to_double(r[6], line),
                                          to_double(r[7], line)};
    }
    report.pair_scores[{r[0], r[1]}] = ps;
  }
  if (report.pair_scores.size() != report.pmids.size() * (report.pmids.size() - (report.pmids.empty() ? 0 : 1))) {
    throw IntegrityError("contradiction report " + report.pool_ref + " does not cover every ordered pair");
  }
  compute_salience(report);
  return report;
}

void write_salience_csv(std::ostream& out, const std::vector<const ContradictionReport*>& reports) {
  csv::write_row(out, {"query_ref", "pmid", "salience"});
  for (const auto* r : reports) {
    for (const auto& p : r->pmids) {
      const auto it = r->salience.find(p);
      csv::write_row(out, {r->pool_ref, p, it == r->salience.end() ? "" : fmt::format("{}", it->second)});
    }
  }
}

}  // namespace medrag
