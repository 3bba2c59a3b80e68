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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "medrag/error.hpp"
#include "medrag/ranking.hpp"
#include "support.hpp"

using namespace medrag;
using namespace medrag::test;

namespace {

// Embeddings realising chosen relevance and cross-similarity values in 3-d:
// q = e1, d_i = s_i e1 + sqrt(1 - s_i^2) u_i with u_i unit vectors in the
// (e2, e3) plane.
std::vector<Embedding> two_docs(double s1, double s2, double cross) {
  const double t1 = std::sqrt(1 - s1 * s1), t2 = std::sqrt(1 - s2 * s2);
  // cross = s1 s2 + t1 t2 cos(phi)
  const double c = (cross - s1 * s2) / (t1 * t2);
  const double phi = std::acos(c);
  return {Embedding(Eigen::Vector3d(s1, t1, 0)), Embedding(Eigen::Vector3d(s2, t2 * std::cos(phi), t2 * std::sin(phi)))};
}

double naive_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    na += a(i) * a(i);
    nb += b(i) * b(i);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

EvidencePool pool_with_years(const std::vector<int>& years) {
  EvidencePool p;
  p.query_ref = "1:dosage";
  p.stage = PoolStage::Selected;
  for (std::size_t i = 0; i < years.size(); ++i) p.documents.push_back(doc(std::to_string(101 + i), years[i], 0));
  return p;
}

}  // namespace

TEST_CASE("parameter validation") {
  RankingParams p;
  CHECK_NOTHROW(p.validate());
  CHECK(p.lambda == 0.7);
  CHECK(p.alpha == 0.7);
  CHECK(p.epsilon == 1e-5);
  CHECK(p.k == 5);
  for (auto bad : {-0.1, 1.1, std::nan("")}) {
    RankingParams q;
    q.lambda = bad;
    CHECK_THROWS_AS(q.validate(), ConfigError);
    q = {};
    q.alpha = bad;
    CHECK_THROWS_AS(q.validate(), ConfigError);
  }
  p.k = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.epsilon = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("temporal score") {
  CHECK(temporal_score(2010, 2000, 2020) == doctest::Approx(10.0 / 20.00001).epsilon(1e-12));
  CHECK(temporal_score(2010, 2000, 2020) == doctest::Approx(0.49999975).epsilon(1e-8));
  CHECK(temporal_score(2000, 2000, 2020) == 0.0);
  CHECK(temporal_score(2020, 2000, 2020) < 1.0);
  const auto same = pool_with_years({2011, 2011, 2011});
  for (const auto& d : same.documents) CHECK(temporal_score(d, same) == 0.0);
  CHECK_THROWS_AS(temporal_score(same.documents[0], EvidencePool{}), DomainError);
}

TEST_CASE("mmr examples") {
  const Embedding q(Eigen::Vector3d(1, 0, 0));
  const auto docs = two_docs(0.9, 0.8, 0.5);
  const auto m = mmr_scores(q, docs, 0.7);
  CHECK(m(0) == doctest::Approx(0.48).epsilon(1e-12));
  CHECK(m(1) == doctest::Approx(0.41).epsilon(1e-12));

  const std::vector<Embedding> single = {Embedding(Eigen::Vector2d(0.6, 0.8))};
  CHECK(mmr_scores(Embedding(Eigen::Vector2d(1, 0)), single, 0.7)(0) == doctest::Approx(0.42).epsilon(1e-12));

  const auto pure = mmr_scores(q, docs, 1.0);
  CHECK(pure(0) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(pure(1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK_THROWS_AS(mmr_scores(q, {}, 0.7), DomainError);
}

TEST_CASE("combined score examples") {
  // MMR 0.48 and tau 0.5 combine to 0.486.
  CHECK(0.7 * 0.48 + 0.3 * 0.5 == doctest::Approx(0.486));
  const Embedding q(Eigen::Vector3d(1, 0, 0));
  auto docs = two_docs(0.9, 0.8, 0.5);
  const auto pool = pool_with_years({2000, 2020});
  const auto r = rank(q, pool, docs);
  REQUIRE(r.size() == 2);
  // Recency lifts the less relevant but newer document to the top.
  CHECK(r[0].pmid == "102");
  CHECK(r[0].mmr == doctest::Approx(0.41).epsilon(1e-12));
  CHECK(r[0].score == doctest::Approx(0.7 * 0.41 + 0.3 * 20 / 20.00001).epsilon(1e-12));
  CHECK(r[1].pmid == "101");
  CHECK(r[1].tau == 0.0);
  CHECK(r[1].score == doctest::Approx(0.336).epsilon(1e-12));
}

TEST_CASE("equal documents are ordered by recency for any alpha below one") {
  const Embedding q(Eigen::Vector3d(1, 0, 0));
  const std::vector<Embedding> docs = {Embedding(Eigen::Vector3d(0.8, 0.6, 0)), Embedding(Eigen::Vector3d(0.8, 0, 0.6))};
  const auto pool = pool_with_years({1990, 2015});
  for (double alpha : {0.0, 0.3, 0.7, 0.99}) {
    RankingParams p;
    p.alpha = alpha;
    CHECK(rank(q, pool, docs, p).front().pmid == "102");
  }
  RankingParams p;
  p.alpha = 1.0;
  CHECK(rank(q, pool, docs, p).front().pmid == "101");  // exact tie, pmid order
}

TEST_CASE("ranking properties on random pools") {
  Rng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 20);
    std::vector<int> years;
    for (int i = 0; i < n; ++i) years.push_back(rng.integer(1990, 2024));
    const auto pool = pool_with_years(years);
    const auto dim = rng.integer(2, 12);
    std::vector<Embedding> vs;
    for (int i = 0; i < n; ++i) vs.emplace_back(rng.vector(dim));
    const Embedding q(rng.vector(dim));
    RankingParams p;
    p.lambda = rng.real();
    p.alpha = rng.real();
    const auto ranked = rank(q, pool, vs, p);

    REQUIRE(ranked.size() == pool.documents.size());
    std::vector<std::string> got, want;
    for (const auto& s : ranked) got.push_back(s.pmid);
    for (const auto& d : pool.documents) want.push_back(d.pmid);
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    CHECK(got == want);

    for (std::size_t i = 0; i < ranked.size(); ++i) {
      const auto& s = ranked[i];
      CHECK(std::abs(s.mmr - (p.lambda * s.relevance - (1 - p.lambda) * s.redundancy)) <= 1e-12);
      CHECK(std::abs(s.score - (p.alpha * s.mmr + (1 - p.alpha) * s.tau)) <= 1e-12);
      CHECK(s.tau >= 0.0);
      CHECK(s.tau < 1.0);
      if (i > 0) CHECK(ranked[i - 1].score >= s.score);
    }
    const int oldest = *std::min_element(years.begin(), years.end());
    for (const auto& s : ranked) {
      if (s.year == oldest) CHECK(s.tau == 0.0);
    }

    // Scaling every vector by a positive constant leaves the order unchanged.
    std::vector<Embedding> scaled;
    const double c = rng.real(0.1, 50);
    for (const auto& v : vs) scaled.emplace_back(v.values() * c);
    const auto again = rank(Embedding(q.values() * c), pool, scaled, p);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      CHECK(again[i].score == doctest::Approx(ranked[i].score).epsilon(1e-9));
    }
  }
}

TEST_CASE("ranking equals sorting by independently recomputed scores") {
  Rng rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.integer(1, 8);
    std::vector<int> years;
    for (int i = 0; i < n; ++i) years.push_back(rng.integer(1980, 2024));
    const auto pool = pool_with_years(years);
    std::vector<Embedding> vs;
    for (int i = 0; i < n; ++i) vs.emplace_back(rng.vector(5));
    const Embedding q(rng.vector(5));
    const auto ranked = rank(q, pool, vs);

    const int lo = *std::min_element(years.begin(), years.end());
    const int hi = *std::max_element(years.begin(), years.end());
    std::vector<std::pair<double, std::string>> oracle;
    for (int i = 0; i < n; ++i) {
      double red = 0;
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double c = naive_cos(vs[static_cast<std::size_t>(i)].values(), vs[static_cast<std::size_t>(j)].values());
        red = any ? std::max(red, c) : c;
        any = true;
      }
      const double mmr = 0.7 * naive_cos(q.values(), vs[static_cast<std::size_t>(i)].values()) - 0.3 * red;
      const double tau = (years[static_cast<std::size_t>(i)] - lo) / (hi - lo + 1e-5);
      oracle.emplace_back(0.7 * mmr + 0.3 * tau, pool.documents[static_cast<std::size_t>(i)].pmid);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (int i = 0; i < n; ++i) {
      const auto& r = ranked[static_cast<std::size_t>(i)];
      CHECK(std::abs(r.score - oracle[static_cast<std::size_t>(i)].first) <= 1e-12);
      CHECK(r.pmid == oracle[static_cast<std::size_t>(i)].second);
    }
  }
}

TEST_CASE("limits") {
  Rng rng(47);
  const auto pool = pool_with_years({2001, 2005, 2005, 2019, 2022});
  std::vector<Embedding> vs;
  for (int i = 0; i < 5; ++i) vs.emplace_back(rng.vector(4));
  const Embedding q(rng.vector(4));

  RankingParams pure_relevance;
  pure_relevance.lambda = 1.0;
  pure_relevance.alpha = 1.0;
  const auto by_rel = rank(q, pool, vs, pure_relevance);
  for (std::size_t i = 1; i < by_rel.size(); ++i) CHECK(by_rel[i - 1].relevance >= by_rel[i].relevance);
  for (const auto& s : by_rel) CHECK(s.mmr == s.relevance);

  RankingParams mmr_only;
  mmr_only.alpha = 1.0;
  const auto by_mmr = rank(q, pool, vs, mmr_only);
  for (std::size_t i = 1; i < by_mmr.size(); ++i) CHECK(by_mmr[i - 1].mmr >= by_mmr[i].mmr);

  const auto one = pool_with_years({2010});
  const auto single = rank(q, one, std::span<const Embedding>(vs).first(1));
  REQUIRE(single.size() == 1);
  CHECK(single[0].redundancy == 0.0);
  CHECK(single[0].tau == 0.0);

  CHECK_THROWS_AS(rank(q, pool, std::span<const Embedding>(vs).first(3)), DomainError);
  CHECK(rank(q, EvidencePool{}, {}).empty());
}

TEST_CASE("top-k and the score table") {
  Rng rng(53);
  std::vector<int> years(14);
  for (auto& y : years) y = rng.integer(1990, 2020);
  const auto pool = pool_with_years(years);
  std::vector<Embedding> vs;
  for (int i = 0; i < 14; ++i) vs.emplace_back(rng.vector(6));
  const auto ranked = rank(Embedding(rng.vector(6)), pool, vs);

  const auto top = top_k_similar(ranked, 5);
  REQUIRE(top.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(top[i].pmid == ranked[i].pmid);
  CHECK(top_k_similar(std::span(ranked).first(3), 5).size() == 3);
  CHECK(top_k_similar(ranked, 1).front().pmid == ranked.front().pmid);
  CHECK_THROWS_AS(top_k_similar(ranked, 0), DomainError);

  std::ostringstream out;
  write_score_table(out, ranked);
  CHECK(out.str().rfind("pmid,year,relevance,redundancy,mmr,tau,score\n", 0) == 0);
  std::istringstream in(out.str());
  const auto back = read_score_table(in);
  REQUIRE(back.size() == ranked.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].pmid == ranked[i].pmid);
    CHECK(back[i].year == ranked[i].year);
    CHECK(back[i].score == ranked[i].score);  // shortest round-trip formatting
    CHECK(back[i].redundancy == ranked[i].redundancy);
  }
  std::istringstream bad("pmid,year\n1,2\n");
  CHECK_THROWS_AS(read_score_table(bad), ParseError);
}
