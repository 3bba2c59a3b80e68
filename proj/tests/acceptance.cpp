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

// Acceptance checks: one [PASS]/[FAIL] line per criterion, exit 1 on any
// failure. Each check compares the library against an independent oracle
// written here, or against fixed structural expectations.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "medrag/analysis.hpp"
#include "medrag/contradiction.hpp"
#include "medrag/csv.hpp"
#include "medrag/hashing.hpp"
#include "medrag/metrics.hpp"
#include "medrag/pipeline.hpp"
#include "medrag/pubmed.hpp"
#include "medrag/ranking.hpp"
#include "medrag/selection.hpp"
#include "medrag/text.hpp"
#include "mock_server.hpp"
#include "support.hpp"

using namespace medrag;
using namespace medrag::test;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = true;
  std::string detail;
};

// Collects the first few mismatches of a check.
struct Tally {
  std::size_t checks = 0;
  std::size_t failures = 0;
  std::string first;

  void expect(bool cond, const std::string& what) {
    ++checks;
    if (cond) return;
    if (failures++ == 0) first = what;
  }
  Verdict verdict(const std::string& extra = "") const {
    std::string d = std::to_string(checks) + " checks";
    if (!extra.empty()) d += ", " + extra;
    if (failures) d += ", " + std::to_string(failures) + " failed; first: " + first;
    return {failures == 0, d};
  }
};

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

long long pmid_num(const std::string& p) { return std::stoll(p); }

double naive_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    na += a(i) * a(i);
    nb += b(i) * b(i);
  }
  return dot / std::sqrt(na * nb);
}

// ---------------------------------------------------------------- selection

std::vector<int> oracle_years(std::set<int> distinct) {
  std::vector<int> all(distinct.begin(), distinct.end());
  if (all.size() < 20) return all;
  std::vector<int> kept;
  int last = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i == 0 || all[i] - last >= 3) {
      kept.push_back(all[i]);
      last = all[i];
    }
  }
  std::vector<int> out;
  if (kept.size() > 20) {
    // 20 evenly spaced ranks over the greedy picks, rounded to nearest.
    const double n = static_cast<double>(kept.size() - 1);
    for (int i = 0; i < 20; ++i) {
      const double exact = i * n / 19.0;
      const auto lo = static_cast<std::size_t>(std::floor(exact));
      const double frac = exact - std::floor(exact);
      const std::size_t idx = frac > 0.5 + 1e-9 ? lo + 1 : lo;
      out.push_back(kept[std::min<std::size_t>(idx, kept.size() - 1)]);
    }
  } else {
    out = kept;
    for (auto it = all.rbegin(); out.size() < 20 && it != all.rend(); ++it) {
      if (std::find(kept.begin(), kept.end(), *it) == kept.end()) out.push_back(*it);
    }
    std::sort(out.begin(), out.end());
  }
  out.back() = all.back();
  return out;
}

std::vector<std::string> oracle_selection(const EvidencePool& raw) {
  std::map<int, std::vector<const Document*>> by_year;
  for (const auto& d : raw.documents) by_year[d.year].push_back(&d);
  std::set<int> distinct;
  for (const auto& [y, v] : by_year) distinct.insert(y);
  const auto years = oracle_years(distinct);
  for (auto& [y, v] : by_year) {
    std::sort(v.begin(), v.end(), [](const Document* a, const Document* b) {
      return std::make_pair(-a->citations, pmid_num(a->pmid)) < std::make_pair(-b->citations, pmid_num(b->pmid));
    });
  }
  std::vector<std::string> out;
  for (std::size_t round = 0; out.size() < 20; ++round) {
    bool any = false;
    for (int y : years) {
      const auto& v = by_year[y];
      if (round < v.size() && out.size() < 20) {
        out.push_back(v[round]->pmid);
        any = true;
      }
    }
    if (!any) break;
  }
  return out;
}

Verdict selection_oracle() {
  Rng rng(2024);
  Tally t;
  const auto start = Clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    EvidencePool raw;
    raw.query_ref = "1:dosage";
    const int n = rng.integer(1, 60);
    const int span = rng.integer(1, 30);
    const int first = rng.integer(1960, 2024 - span + 1);
    std::set<std::string> used;
    for (int i = 0; i < n; ++i) {
      std::string pmid;
      do pmid = std::to_string(rng.integer(1, 99999999));
      while (!used.insert(pmid).second);
      raw.documents.push_back(doc(pmid, first + rng.integer(0, span - 1), rng.integer(0, 8)));
    }
    std::vector<std::string> got;
    for (const auto& d : select_balanced(raw).documents) got.push_back(d.pmid);
    t.expect(got == oracle_selection(raw), "pool " + std::to_string(trial));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  t.expect(secs < 5.0, "took " + std::to_string(secs) + " s");
  return t.verdict("200 pools");
}

// ------------------------------------------------------------------ ranking

Verdict ranking_oracle() {
  Rng rng(7);
  Tally t;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 8);
    const auto dim = rng.integer(2, 10);
    EvidencePool pool;
    std::vector<Embedding> vs;
    for (int i = 0; i < n; ++i) {
      pool.documents.push_back(doc(std::to_string(100 + i), rng.integer(1990, 2024), 0));
      vs.emplace_back(rng.vector(dim));
    }
    const Embedding q(rng.vector(dim));
    RankingParams p;
    p.lambda = rng.real();
    p.alpha = rng.real();
    const auto ranked = rank(q, pool, vs, p);

    int lo = 9999, hi = 0;
    for (const auto& d : pool.documents) lo = std::min(lo, d.year), hi = std::max(hi, d.year);
    std::vector<std::pair<double, std::string>> want;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      double red = 0;
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double c = naive_cos(vs[ui].values(), vs[static_cast<std::size_t>(j)].values());
        red = any ? std::max(red, c) : c;
        any = true;
      }
      const double mmr = p.lambda * naive_cos(q.values(), vs[ui].values()) - (1 - p.lambda) * red;
      const double tau = (pool.documents[ui].year - lo) / (hi - lo + 1e-5);
      want.emplace_back(p.alpha * mmr + (1 - p.alpha) * tau, pool.documents[ui].pmid);
    }
    std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : pmid_num(a.second) < pmid_num(b.second);
    });
    for (int i = 0; i < n; ++i) {
      const auto& r = ranked[static_cast<std::size_t>(i)];
      const auto tag = "pool " + std::to_string(trial) + " rank " + std::to_string(i);
      t.expect(r.pmid == want[static_cast<std::size_t>(i)].second, tag + " order");
      t.expect(close(r.score, want[static_cast<std::size_t>(i)].first, 1e-12), tag + " score");
      t.expect(close(r.score, p.alpha * r.mmr + (1 - p.alpha) * r.tau, 1e-12), tag + " S decomposition");
      t.expect(close(r.mmr, p.lambda * r.relevance - (1 - p.lambda) * r.redundancy, 1e-12),
               tag + " MMR decomposition");
    }
  }
  return t.verdict("200 pools");
}

// ------------------------------------------------------------ contradiction

Verdict cnt_oracle() {
  const auto cfg = load_config(fixture_bundle() / "config.json");
  const auto corpus = select_corpus(load_corpus(fixture_bundle() / "corpus.jsonl"));
  const auto sstore = EmbeddingStore::open(cfg.resolve(cfg.embedding.scientific.store));
  const auto nstore = NliStore::open(cfg.resolve(cfg.contradiction.nli.store));
  const FileBackedEmbeddingProvider sci(sstore);
  const FileBackedNliProvider nli(NliStore::open(cfg.resolve(cfg.contradiction.nli.store)));
  const auto params = cfg.contradiction_params();

  Tally t;
  std::size_t pairs = 0, nonzero = 0;
  for (const auto& [ref, pool] : corpus.pools) {
    const auto report = score_pool(pool, sci, nli, params);
    for (const auto& a : pool.documents) {
      for (const auto& b : pool.documents) {
        if (a.pmid == b.pmid) continue;
        double want = 0;
        for (const auto& s : a.sentences) {
          for (const auto& h : b.sentences) {
            const double c = naive_cos(sstore.find(s)->values(), sstore.find(h)->values());
            if (c >= params.theta) want = std::max(want, nstore.find(pair_hash(s, h))->con);
          }
        }
        const double got = report.pair_scores.at({a.pmid, b.pmid}).cnt;
        t.expect(close(got, want, 1e-12), ref + " " + a.pmid + "->" + b.pmid);
        ++pairs;
        nonzero += want > 0;
      }
    }
  }
  return t.verdict(std::to_string(pairs) + " document pairs, " + std::to_string(nonzero) + " with candidates");
}

Verdict salience_and_sets() {
  Tally t;
  ContradictionReport r;
  r.pmids = {"A", "B", "C"};
  auto ps = [](double c) {
    PairScore p;
    p.cnt = c;
    return p;
  };
  r.pair_scores = {{{"A", "B"}, ps(0.8)}, {{"A", "C"}, ps(0.2)}, {{"B", "A"}, ps(0.1)},
                   {{"B", "C"}, ps(0.0)}, {{"C", "A"}, ps(0.6)}, {{"C", "B"}, ps(0.6)}};
  compute_salience(r);
  t.expect(close(r.salience.at("A"), 0.5, 1e-12), "salience(A) = 0.5");
  t.expect(close(r.salience.at("B"), 0.05, 1e-12), "salience(B) = 0.05");
  t.expect(close(r.salience.at("C"), 0.6, 1e-12), "salience(C) = 0.6");

  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    ContradictionReport rep;
    const int n = rng.integer(2, 20);
    for (int i = 0; i < n; ++i) {
      const auto p = std::to_string(rng.integer(1, 40) * 100 + i);
      rep.pmids.push_back(p);
      // coarse values so ties happen
      rep.salience[p] = rng.integer(0, 4) / 4.0;
    }
    const std::size_t k = 1 + rng.index(6);
    const auto sets = contradiction_contexts(rep, k);
    auto desc = rep.pmids, asc = rep.pmids;
    std::sort(desc.begin(), desc.end(), [&](const std::string& a, const std::string& b) {
      return std::make_pair(-rep.salience[a], pmid_num(a)) < std::make_pair(-rep.salience[b], pmid_num(b));
    });
    std::sort(asc.begin(), asc.end(), [&](const std::string& a, const std::string& b) {
      return std::make_pair(rep.salience[a], pmid_num(a)) < std::make_pair(rep.salience[b], pmid_num(b));
    });
    desc.resize(std::min(k, desc.size()));
    asc.resize(std::min(k, asc.size()));
    t.expect(sets.most == desc, "most set, trial " + std::to_string(trial));
    t.expect(sets.least == asc, "least set, trial " + std::to_string(trial));
  }
  return t.verdict("300 random reports");
}

// ------------------------------------------------------------------ metrics

Verdict metric_oracles() {
  Tally t;
  t.expect(close(rouge_n("the cat sat", "the cat sat down", 1), 6.0 / 7, 1e-12), "R1");
  t.expect(close(rouge_n("the cat sat", "the cat sat down", 2), 0.8, 1e-12), "R2");
  t.expect(close(rouge_l("a b c d", "a c b d"), 0.75, 1e-12), "RL");
  t.expect(close(jsd(token_distribution("a b"), token_distribution("c d")), std::log(2.0), 1e-12), "JSD disjoint");
  t.expect(close(jsd(token_distribution("a b"), token_distribution("a")),
                 0.25 * std::log(2.0 / 3) + 0.25 * std::log(2.0) + 0.5 * std::log(4.0 / 3), 1e-12),
           "JSD partial");

  std::unordered_map<std::string, Eigen::VectorXd> table;
  table["dose"] = Eigen::Vector2d(1, 0);
  table["renal"] = Eigen::Vector2d(0, 1);
  const FileBackedWordVectors wv(table, 2);
  const auto v = vsim("dose renal", "dose", wv);
  t.expect(v && close(v->cos, 1 / std::sqrt(2.0), 1e-12) && close(v->dot, 0.5, 1e-12), "VSIM");
  t.expect(!vsim("unknown words", "dose", wv), "VSIM all out of vocabulary");

  MetricScores a, b, c;
  a.r1 = 0.2;
  b.r1 = 0.4;
  c.r1 = 0.5;
  t.expect(close(*macro_average({{1, a}, {1, b}, {2, c}}).r1, 0.4, 1e-12), "macro average");

  Rng rng(13);
  const std::vector<std::string> vocab = {"dose", "renal", "risk", "of", "mg", "daily", "liver"};
  for (int trial = 0; trial < 1000; ++trial) {
    auto text = [&] {
      std::string s;
      for (int i = 0, n = rng.integer(1, 10); i < n; ++i) s += vocab[rng.index(vocab.size())] + " ";
      return s;
    };
    const auto x = text(), y = text();
    const auto p = token_distribution(x), q = token_distribution(y);
    const double k = kld(p, q);
    t.expect(k >= 0, "KLD >= 0");
    // Smoothed KL recomputed from scratch.
    std::set<std::string> support;
    for (const auto& [w, pv] : p) support.insert(w);
    for (const auto& [w, qv] : q) support.insert(w);
    const double z = 1 + 1e-10 * static_cast<double>(support.size());
    double want = 0;
    for (const auto& [w, pv] : p) want += pv * std::log(pv * z / ((q.count(w) ? q.at(w) : 0.0) + 1e-10));
    t.expect(close(k, want, 1e-9), "KLD value");
    const double j = jsd(p, q);
    t.expect(j >= 0 && j <= std::log(2.0) + 1e-12, "JSD bounds");
  }
  return t.verdict("1000 random pairs");
}

// ------------------------------------------------------------------- limits

Verdict limits() {
  Tally t;
  Rng rng(17);
  EvidencePool pool;
  std::vector<Embedding> vs;
  for (int i = 0; i < 6; ++i) {
    pool.documents.push_back(doc(std::to_string(300 + i), 2000 + 3 * i, 0));
    vs.emplace_back(rng.vector(5));
  }
  const Embedding q(rng.vector(5));

  RankingParams rel;
  rel.lambda = 1;
  rel.alpha = 1;
  const auto by_rel = rank(q, pool, vs, rel);
  std::vector<std::pair<double, std::string>> want;
  for (std::size_t i = 0; i < vs.size(); ++i) want.emplace_back(-naive_cos(q.values(), vs[i].values()), pool.documents[i].pmid);
  std::sort(want.begin(), want.end());
  for (std::size_t i = 0; i < want.size(); ++i) t.expect(by_rel[i].pmid == want[i].second, "lambda = 1 is relevance order");

  RankingParams mmr_only;
  mmr_only.alpha = 1;
  for (const auto& s : rank(q, pool, vs, mmr_only)) t.expect(s.score == s.mmr, "alpha = 1 drops recency");

  EvidencePool same = pool;
  for (auto& d : same.documents) d.year = 2011;
  for (const auto& s : rank(q, same, vs)) t.expect(s.tau == 0.0, "same-year pool has tau = 0");

  EvidencePool one;
  one.documents = {pool.documents.front()};
  const auto single = rank(q, one, std::span<const Embedding>(vs).first(1));
  t.expect(single.size() == 1 && single[0].redundancy == 0.0 && single[0].tau == 0.0, "single-document ranking");
  t.expect(close(single[0].mmr, 0.7 * naive_cos(q.values(), vs[0].values()), 1e-12), "single-document MMR");

  ContradictionReport lone;
  lone.pmids = {"300"};
  compute_salience(lone);
  t.expect(lone.salience.empty(), "single-document salience is undefined");
  const auto sets = contradiction_contexts(lone, 5);
  t.expect(sets.most == lone.pmids && sets.least == lone.pmids, "single-document contexts");
  return t.verdict();
}

// --------------------------------------------------------------- end to end

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
  }
  return out;
}

fs::path fresh_bundle(const TempDir& tmp, const std::string& name) {
  const auto dst = tmp / name;
  fs::copy(fixture_bundle(), dst, fs::copy_options::recursive);
  fs::remove_all(dst / "work");
  return dst;
}

fs::path run_bundle(const fs::path& bundle) {
  std::ostringstream log;
  Pipeline p(load_config(bundle / "config.json"), log);
  p.run_all();
  return bundle / "work";
}

Verdict end_to_end_determinism(const TempDir& tmp, fs::path& work_out) {
  Tally t;
  const auto start = Clock::now();
  const auto a = run_bundle(fresh_bundle(tmp, "a"));
  const auto b = run_bundle(fresh_bundle(tmp, "b"));
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const auto ta = tree(a), tb = tree(b);
  t.expect(ta.size() == tb.size(), "same file count");
  for (const auto& [rel, data] : ta) {
    const auto it = tb.find(rel);
    t.expect(it != tb.end() && it->second == data, rel);
  }
  t.expect(secs < 60, "took " + std::to_string(secs) + " s");
  work_out = a;
  std::ostringstream extra;
  extra << ta.size() << " files, " << std::fixed;
  extra.precision(1);
  extra << secs << " s for two runs";
  return t.verdict(extra.str());
}

std::vector<csv::Row> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<csv::Row> rows;
  for (csv::Row r; csv::read_row(in, r);) rows.push_back(r);
  return rows;
}

Verdict output_shapes(const fs::path& work) {
  Tally t;
  const auto metrics = read_csv(work / "evaluate/metrics.csv");
  t.expect(!metrics.empty() && metrics[0].size() == 2 + kMetricCount, "metrics header has 9 metric columns");
  std::map<std::string, std::set<std::string>> conditions;
  for (std::size_t i = 1; i < metrics.size(); ++i) {
    t.expect(metrics[i].size() == 2 + kMetricCount, "metrics row width");
    conditions[metrics[i][0]].insert(metrics[i][1]);
  }
  t.expect(!conditions.empty(), "metrics has rows");
  for (const auto& [model, cs] : conditions) {
    t.expect(cs == std::set<std::string>{"ms", "mc", "lc"}, model + " covers the three conditions");
  }

  const auto table3 = read_csv(work / "analyze/table3.csv");
  t.expect(table3.size() == 6, "table3 has a header and 5 rows");
  for (const auto& r : table3) t.expect(r.size() == 6, "table3 rows have a label and 5 counts");

  const auto fig2 = read_csv(work / "analyze/fig2.csv");
  t.expect(fig2.size() == 11, "fig2 has a header and 10 intervals");
  for (std::size_t i = 1; i < fig2.size(); ++i) {
    double sum = 0;
    for (std::size_t c = 3; c < fig2[i].size(); ++c) sum += std::stod(fig2[i][c]);
    t.expect(fig2[i][2] == "1" ? sum == 0.0 : close(sum, 1.0, 1e-9), "fig2 row " + fig2[i][0] + " sums to 1");
  }
  return t.verdict(std::to_string(conditions.size()) + " models");
}

// ---------------------------------------------------------------- ingestion

Verdict ingestion_conformance() {
  Tally t;
  const auto ids = parse_esearch_xml(slurp(test_data("pubmed/esearch_3.xml")));
  t.expect(ids == std::vector<std::string>{"31452104", "29920517", "8123401"}, "esearch ids");
  bool threw = false;
  try {
    parse_esearch_xml(slurp(test_data("pubmed/esearch_error.xml")));
  } catch (const ProtocolError&) {
    threw = true;
  }
  t.expect(threw, "esearch error payload");

  std::vector<std::string> many;
  for (int i = 0; i < 1234; ++i) many.push_back(std::to_string(5000 + i));
  std::size_t covered = 0;
  for (const auto& b : make_fetch_batches(many)) {
    t.expect(b.pmids.size() <= 300, "batch size <= 300");
    covered += b.pmids.size();
  }
  t.expect(covered == many.size(), "batches cover every pmid");

  const Medicine med{1, "WARFARIN"};
  QueryInstance q;
  q.medicine_id = 1;
  q.slot = Slot::AdverseEffects;
  q.text = "Are there any side effects of WARFARIN?";
  const auto f = formulate_queries(med, q, {"side", "effects", "WARFARIN"});
  t.expect(f.size() == 3, "three tiers");
  t.expect(f.size() == 3 && f[1].expression.find("WARFARIN[ti]") != std::string::npos, "tier 2 carries [ti]");
  t.expect(f.size() == 3 && f[0].expression.find("[ti]") == std::string::npos &&
               f[2].expression.find("[ti]") == std::string::npos,
           "only tier 2 restricts the title");

  MockServer mock;
  const auto efetch = slurp(test_data("pubmed/efetch_2.xml"));
  const auto icite = slurp(test_data("pubmed/icite.json"));
  mock.server.Post("/efetch.fcgi", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(efetch, "text/xml");
  });
  mock.server.Get("/api/pubs", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(icite, "application/json");
  });
  mock.start();
  PubMedConfig cfg;
  cfg.eutils_base = cfg.icite_base = mock.url();
  cfg.api_key = "";
  cfg.min_request_interval = std::chrono::milliseconds{0};
  cfg.retry.sleep = [](std::chrono::milliseconds) {};
  const PubMedClient client(cfg);
  const auto docs = client.efetch_abstracts({"8123401", "29920517"});
  t.expect(docs.size() == 1, "abstract-less record dropped");
  if (docs.size() == 1) {
    t.expect(docs[0].pmid == "8123401", "kept pmid");
    t.expect(docs[0].year == 1998, "MedlineDate year");
    t.expect(docs[0].citations == 57, "citation count");
    t.expect(docs[0].text.find('<') == std::string::npos, "inline markup stripped");
  }
  return t.verdict();
}

}  // namespace

int main() {
  TempDir tmp("acceptance");
  fs::path work;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"balanced selection matches the round-robin oracle", selection_oracle},
      {"ranking matches recomputed MMR and recency scores", ranking_oracle},
      {"pairwise contradiction matches brute force on the fixture", cnt_oracle},
      {"salience and contrast sets", salience_and_sets},
      {"metric oracles", metric_oracles},
      {"limiting parameter values", limits},
      {"end-to-end runs are byte-identical", [&] { return end_to_end_determinism(tmp, work); }},
      {"metrics, table and figure shapes", [&] { return output_shapes(work); }},
      {"PubMed ingestion conformance", ingestion_conformance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.ok;
    std::cout << (v.ok ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << criteria[i].first << " (" << v.detail << ")\n";
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed ? 1 : 0;
}
