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

#include <cmath>
#include <set>
#include <sstream>

#include "medrag/evaluation.hpp"
#include "medrag/text.hpp"
#include "support.hpp"

using namespace medrag;
using namespace medrag::test;

namespace {

const double kLn2 = std::log(2.0);

// Letter counts plus a constant coordinate, so no text maps to zero.
class LetterEncoder final : public EmbeddingProvider {
 public:
  std::size_t dimension() const override { return 27; }
  const std::string& model_tag() const override { return tag_; }
  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    std::vector<Embedding> out;
    for (const auto& t : texts) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(27);
      v(26) = 1;
      for (char c : t) {
        if (c >= 'a' && c <= 'z') v(c - 'a') += 1;
      }
      out.emplace_back(v);
    }
    return out;
  }

 private:
  std::string tag_ = "letters";
};

std::string random_text(Rng& rng, int max_tokens) {
  static const std::vector<std::string> vocab = {"dose", "renal", "liver", "risk", "the", "of", "mg", "daily", "warfarin"};
  std::string out;
  const int n = rng.integer(1, max_tokens);
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + vocab[rng.index(vocab.size())];
  return out;
}

// Independent restatements over token counts.
double oracle_kld(const std::string& a, const std::string& b, double eps) {
  std::map<std::string, double> p, q;
  const auto ta = word_tokens(a), tb = word_tokens(b);
  for (const auto& t : ta) p[t] += 1.0 / static_cast<double>(ta.size());
  for (const auto& t : tb) q[t] += 1.0 / static_cast<double>(tb.size());
  std::set<std::string> vocab;
  for (const auto& [t, v] : p) vocab.insert(t);
  for (const auto& [t, v] : q) vocab.insert(t);
  double qsum = 0;
  for (const auto& t : vocab) qsum += (q.count(t) ? q[t] : 0.0) + eps;
  double out = 0;
  for (const auto& [t, pv] : p) out += pv * std::log(pv / (((q.count(t) ? q[t] : 0.0) + eps) / qsum));
  return out;
}

double oracle_jsd(const std::string& a, const std::string& b) {
  std::map<std::string, double> p, q;
  const auto ta = word_tokens(a), tb = word_tokens(b);
  for (const auto& t : ta) p[t] += 1.0 / static_cast<double>(ta.size());
  for (const auto& t : tb) q[t] += 1.0 / static_cast<double>(tb.size());
  auto kl_to_mid = [&](std::map<std::string, double>& x, std::map<std::string, double>& y) {
    double s = 0;
    for (const auto& [t, v] : x) s += v * std::log(v / (0.5 * (v + (y.count(t) ? y[t] : 0.0))));
    return s;
  };
  return 0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p);
}

FileBackedWordVectors toy_vectors() {
  std::unordered_map<std::string, Eigen::VectorXd> t;
  t["alpha"] = Eigen::Vector2d(1, 0);
  t["beta"] = Eigen::Vector2d(0, 1);
  t["gamma"] = Eigen::Vector2d(1, 1);
  return FileBackedWordVectors(std::move(t), 2);
}

}  // namespace

TEST_CASE("rouge examples") {
  CHECK(rouge_n("the cat sat", "the cat sat down", 1) == doctest::Approx(0.857143).epsilon(1e-6));
  CHECK(rouge_n("the cat sat", "the cat sat down", 2) == doctest::Approx(0.8));
  CHECK(rouge_l("the cat sat", "the cat sat down") == doctest::Approx(0.857143).epsilon(1e-6));
  // Order matters for L but not for 1.
  CHECK(rouge_n("a b c d", "d c b a", 1) == 1.0);
  CHECK(rouge_l("a b c d", "d c b a") == doctest::Approx(0.25));
  // Clipped counts.
  CHECK(rouge_n("the the", "the the the the", 1) == doctest::Approx(2 * 0.5 * 1 / 1.5));
  CHECK(rouge_n("", "anything", 1) == 0.0);
  CHECK(rouge_n("one", "one", 2) == 0.0);
  CHECK(rouge_l("x", "") == 0.0);
  CHECK(rouge_n("Dose, DOSE.", "dose dose", 1) == 1.0);
}

TEST_CASE("rouge properties") {
  Rng rng(81);
  for (int trial = 0; trial < 500; ++trial) {
    const auto a = random_text(rng, 12), b = random_text(rng, 12);
    for (int n : {1, 2}) {
      const double r = rouge_n(a, b, n);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
      CHECK(r == doctest::Approx(rouge_n(b, a, n)));
    }
    CHECK(rouge_n(a, a, 1) == doctest::Approx(1.0));
    CHECK(rouge_l(a, a) == doctest::Approx(1.0));
    CHECK(rouge_l(a, b) == doctest::Approx(rouge_l(b, a)));
    CHECK(rouge_l(a, b) <= rouge_n(a, b, 1) + 1e-12);
  }
}

TEST_CASE("divergence examples") {
  CHECK(jsd(token_distribution("a b"), token_distribution("c d")) == doctest::Approx(kLn2));
  CHECK(jsd(token_distribution("a b"), token_distribution("a")) == doctest::Approx(0.215762).epsilon(1e-6));
  CHECK(jsd(token_distribution("a b"), token_distribution("b a")) == 0.0);
  CHECK(kld(token_distribution("a"), token_distribution("a")) == doctest::Approx(0.0).epsilon(1e-9));
  // Disjoint support: log(1 / (eps / (1 + 2 eps))).
  CHECK(kld(token_distribution("a"), token_distribution("b")) == doctest::Approx(std::log((1 + 2e-10) / 1e-10)));
  CHECK_THROWS_AS(token_distribution(" ... "), DomainError);
  const auto d = token_distribution("to be or not to be");
  CHECK(d.at("to") == doctest::Approx(1.0 / 3));
  CHECK(d.at("or") == doctest::Approx(1.0 / 6));
}

TEST_CASE("divergence properties") {
  Rng rng(83);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_text(rng, 15), b = random_text(rng, 15);
    const auto p = token_distribution(a), q = token_distribution(b);
    const double j = jsd(p, q);
    CHECK(j >= 0.0);
    CHECK(j <= kLn2 + 1e-12);
    CHECK(j == doctest::Approx(jsd(q, p)).epsilon(1e-12));
    CHECK(j == doctest::Approx(oracle_jsd(a, b)).epsilon(1e-9));
    const double k = kld(p, q);
    CHECK(k >= 0.0);
    CHECK(k == doctest::Approx(oracle_kld(a, b, 1e-10)).epsilon(1e-9));
  }
}

TEST_CASE("embedding similarity") {
  TableEmbeddings t(2);
  t.set("ref", Eigen::Vector2d(1, 1));
  t.set("cand", Eigen::Vector2d(1, 0));
  const auto s = embedding_similarity("ref", "cand", t);
  CHECK(s.cos == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(s.dot == 1.0);
  CHECK_THROWS_AS(embedding_similarity("ref", "unknown", t), LookupError);
}

TEST_CASE("word-vector similarity") {
  const auto wv = toy_vectors();
  auto s = vsim("alpha beta", "gamma", wv);
  REQUIRE(s);
  CHECK(s->cos == doctest::Approx(1.0));
  CHECK(s->dot == doctest::Approx(1.0));
  s = vsim("alpha unknown", "beta", wv);  // OOV tokens drop out of the mean
  REQUIRE(s);
  CHECK(s->cos == doctest::Approx(0.0));
  CHECK_FALSE(vsim("unknown words", "alpha", wv));
  CHECK_FALSE(vsim("alpha", "", wv));

  TempDir tmp("w2v");
  spit(tmp / "v.txt", "2 3\nalpha 1 0 0\nbeta 0 2 0\n");
  const FileBackedWordVectors file(tmp / "v.txt");
  CHECK(file.dimension() == 3);
  CHECK(file.lookup({"beta"})[0](1) == 2.0);
  CHECK(file.lookup({"zeta"})[0].isZero(0));
  spit(tmp / "short.txt", "2 3\nalpha 1 0 0\n");
  CHECK_THROWS_AS(FileBackedWordVectors(tmp / "short.txt"), ParseError);
  spit(tmp / "ragged.txt", "1 3\nalpha 1 0\n");
  CHECK_THROWS_AS(FileBackedWordVectors(tmp / "ragged.txt"), ParseError);
}

TEST_CASE("score_answer fills every defined metric") {
  const LetterEncoder enc;
  const auto wv = toy_vectors();
  auto s = score_answer("alpha beta", "alpha beta", enc, wv);
  CHECK(*s.r1 == 1.0);
  CHECK(*s.rl == 1.0);
  CHECK(*s.bert_cos == doctest::Approx(1.0));
  CHECK(*s.vsim_cos == doctest::Approx(1.0));
  CHECK(*s.jsd == 0.0);
  CHECK(*s.kld == doctest::Approx(0.0).epsilon(1e-9));

  s = score_answer("alpha", "Insufficient evidence", enc, wv);
  CHECK(*s.r1 == 0.0);
  CHECK_FALSE(s.vsim_cos);
  CHECK(s.bert_cos);
  CHECK(*s.jsd == doctest::Approx(kLn2));

  s = score_answer("alpha", "", enc, wv);
  CHECK(*s.r1 == 0.0);
  CHECK_FALSE(s.bert_cos);
  CHECK_FALSE(s.jsd);
  CHECK_FALSE(s.kld);

  const auto arr = as_array(s);
  CHECK(arr.size() == kMetricCount);
  CHECK(from_array(arr).r1 == s.r1);
}

TEST_CASE("macro average is per medicine, then across medicines") {
  auto m = [](double v) {
    MetricScores s;
    s.r1 = v;
    return s;
  };
  const auto avg = macro_average({{1, m(0.2)}, {1, m(0.4)}, {2, m(0.5)}});
  CHECK(*avg.r1 == doctest::Approx(0.4));
  CHECK_FALSE(avg.r2);

  MetricScores missing;
  const auto skip = macro_average({{1, m(0.2)}, {2, missing}, {3, m(0.6)}});
  CHECK(*skip.r1 == doctest::Approx(0.4));
  CHECK_FALSE(macro_average({}).r1);

  // Oracle on random groupings.
  Rng rng(89);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, MetricScores>> items;
    std::map<int, std::vector<double>> by;
    for (int i = 0, n = rng.integer(1, 30); i < n; ++i) {
      const int med = rng.integer(1, 4);
      const double v = rng.real();
      items.emplace_back(med, m(v));
      by[med].push_back(v);
    }
    double sum = 0;
    for (const auto& [med, vs] : by) {
      double s = 0;
      for (double v : vs) s += v;
      sum += s / static_cast<double>(vs.size());
    }
    CHECK(*macro_average(items).r1 == doctest::Approx(sum / static_cast<double>(by.size())));
  }
}

TEST_CASE("score_records, aggregate and the CSV outputs") {
  const auto corpus = load_corpus(fixture_corpus());
  const LetterEncoder enc;
  const auto wv = toy_vectors();
  std::vector<RunRecord> records;
  for (const auto& q : corpus.queries) {
    for (auto c : kAllConditions) {
      for (const std::string model : {"m1", "m2"}) {
        RunRecord r;
        r.query_ref = q.id();
        r.medicine_id = q.medicine_id;
        r.slot = q.slot;
        r.condition = c;
        r.model_tag = model;
        r.answer = model == "m1" ? q.reference_answer : std::string(kInsufficientEvidence);
        records.push_back(r);
      }
    }
  }
  const auto scored = score_records(corpus, records, enc, wv, 2);
  CHECK(scored.size() == (corpus.queries.size() - 1) * 6);
  for (const auto& s : scored) CHECK(s.query_ref != "2:on_treatment_guidance");
  CHECK(score_records(corpus, records, enc, wv, 1).size() == scored.size());

  const auto rows = aggregate(scored);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].model_tag == "m1");
  CHECK(rows[0].condition == Condition::MostSimilar);
  CHECK(rows[0].records == 17);
  CHECK(*rows[0].mean.r1 == doctest::Approx(1.0));
  CHECK(*rows[3].mean.r1 < 0.2);

  std::ostringstream mcsv, scsv;
  write_metrics_csv(mcsv, rows);
  const auto text = mcsv.str();
  CHECK(text.rfind("model,condition,R1,R2,RL,BERT_cos,BERT_dot,VSIM_cos,VSIM_dot,JSD,KLD\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
  write_scores_csv(scsv, scored);
  const auto per = scsv.str();
  CHECK(per.rfind("query_ref,model,condition,R1,", 0) == 0);
  CHECK(std::count(per.begin(), per.end(), '\n') == static_cast<long>(scored.size() + 1));
}
