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

#include <atomic>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

#include "medrag/hashing.hpp"
#include "medrag/rag.hpp"
#include "mock_server.hpp"
#include "support.hpp"

using namespace medrag;
using namespace medrag::test;

namespace {

RetryPolicy no_wait() {
  RetryPolicy r;
  r.sleep = [](std::chrono::milliseconds) {};
  return r;
}

std::vector<ScoredDocument> ranked_of(std::initializer_list<const char*> pmids) {
  std::vector<ScoredDocument> out;
  double s = 1.0;
  for (const auto* p : pmids) {
    ScoredDocument d;
    d.pmid = p;
    d.score = s -= 0.1;
    out.push_back(d);
  }
  return out;
}

ContradictionReport report_with(std::map<std::string, double> sal) {
  ContradictionReport r;
  for (const auto& [p, s] : sal) r.pmids.push_back(p);
  r.salience = std::move(sal);
  return r;
}

// Answers with how many abstracts the prompt carries; scripted failures and
// flags by query text.
class CountingModel final : public GenerationProvider {
 public:
  explicit CountingModel(std::string tag) : tag_(std::move(tag)) {}
  const std::string& model_tag() const override { return tag_; }
  GenerationKind kind() const override { return GenerationKind::Replay; }
  Generation generate(const std::string& prompt) const override {
    ++calls;
    if (!fail_on.empty() && prompt.find(fail_on) != std::string::npos) throw TransportError("service down (503)", 503);
    static const std::regex header(R"(\[Abstract \d+ \|)");
    const auto n = std::distance(std::sregex_iterator(prompt.begin(), prompt.end(), header), std::sregex_iterator());
    Generation g;
    g.text = n < 2 ? " insufficient evidence. " : std::to_string(n) + " abstracts";
    if (!empty_on.empty() && prompt.find(empty_on) != std::string::npos) g.text = "  ";
    g.truncated = !truncate_on.empty() && prompt.find(truncate_on) != std::string::npos;
    return g;
  }
  mutable std::atomic<int> calls{0};
  std::string fail_on, empty_on, truncate_on;

 private:
  std::string tag_;
};

struct Experiment {
  Corpus corpus = load_corpus(fixture_corpus());
  std::map<std::string, std::vector<ScoredDocument>> rankings;
  std::map<std::string, ContradictionReport> reports;

  Experiment() {
    for (const auto& [ref, pool] : corpus.pools) {
      auto& r = rankings[ref];
      auto& rep = reports[ref];
      rep.pool_ref = ref;
      double s = 1.0;
      for (const auto& d : pool.documents) {
        ScoredDocument sd;
        sd.pmid = d.pmid;
        sd.year = d.year;
        sd.score = s -= 0.01;
        r.push_back(sd);
        rep.pmids.push_back(d.pmid);
        rep.salience[d.pmid] = static_cast<double>(d.year % 7) / 7;
      }
    }
  }
};

}  // namespace

TEST_CASE("condition codes") {
  CHECK(condition_code(Condition::MostContradictory) == "mc");
  CHECK(parse_condition("LC") == Condition::LeastContradictory);
  CHECK(parse_condition("most_similar") == Condition::MostSimilar);
  CHECK_THROWS_AS(parse_condition("random"), ConfigError);
}

TEST_CASE("context construction") {
  const auto ranked = ranked_of({"5", "3", "9", "1", "7", "2"});
  CHECK(build_context(ranked, nullptr, Condition::MostSimilar, 5) == std::vector<std::string>{"5", "3", "9", "1", "7"});
  CHECK(build_context(std::span(ranked).first(2), nullptr, Condition::MostSimilar, 5).size() == 2);
  CHECK_THROWS_AS(build_context(ranked, nullptr, Condition::MostContradictory, 5), ConfigError);
  CHECK_THROWS_AS(build_context(ranked, nullptr, Condition::MostSimilar, 0), ConfigError);

  const auto rep = report_with({{"A", 0.9}, {"B", 0.1}, {"C", 0.5}});
  CHECK(build_context(ranked, &rep, Condition::MostContradictory, 2) == std::vector<std::string>{"A", "C"});
  CHECK(build_context(ranked, &rep, Condition::LeastContradictory, 2) == std::vector<std::string>{"B", "C"});
  const ContradictionReport empty;
  CHECK(build_context({}, &empty, Condition::MostContradictory, 5).empty());

  ContradictionReport single;
  single.pmids = {"42"};
  CHECK(build_context(ranked_of({"42"}), &single, Condition::LeastContradictory, 5) ==
        std::vector<std::string>{"42"});
}

TEST_CASE("prompt construction") {
  QueryInstance q;
  q.medicine_id = 1;
  q.slot = Slot::Dosage;
  q.text = "How do I take AMOXICILLIN?";
  const auto a = doc("111", 2001, 0, "First abstract. With {{question}} inside.");
  const auto b = doc("222", 2019, 0, "Second abstract.");
  const std::vector<const Document*> ctx = {&a, &b};
  const auto p = build_prompt(q, ctx);
  CHECK(p.find("[Abstract 1 | PMID 111 | 2001]\nFirst abstract. With {{question}} inside.\n") != std::string::npos);
  CHECK(p.find("[Abstract 2 | PMID 222 | 2019]\nSecond abstract.\n") != std::string::npos);
  CHECK(p.find(q.text) != std::string::npos);
  CHECK(p.find("{{abstracts}}") == std::string::npos);
  CHECK(p.find("Insufficient evidence") != std::string::npos);
  CHECK(build_prompt(q, ctx) == p);
  CHECK(p.find("PMID 111") < p.find("PMID 222"));
  CHECK(!default_prompt_template_name().empty());

  CHECK(build_prompt(q, ctx, "Q: {{question}}\n{{abstracts}}END") ==
        "Q: How do I take AMOXICILLIN?\n[Abstract 1 | PMID 111 | 2001]\nFirst abstract. With {{question}} "
        "inside.\n\n[Abstract 2 | PMID 222 | 2019]\nSecond abstract.\n\nEND");
  CHECK_THROWS_AS(build_prompt(q, {}), DomainError);
}

TEST_CASE("answer normalisation") {
  CHECK(normalize_answer(" insufficient evidence. ") == "Insufficient evidence");
  CHECK(normalize_answer("INSUFFICIENT   EVIDENCE!") == "Insufficient evidence");
  CHECK(normalize_answer("Insufficient evidence") == "Insufficient evidence");
  CHECK(normalize_answer("  Take with food.\n") == "Take with food.");
  CHECK(normalize_answer("Insufficient evidence for children.") == "Insufficient evidence for children.");
  CHECK(normalize_answer("") == "");
}

TEST_CASE("replay provider") {
  const std::vector<ReplayEntry> entries = {{"m", sha256_hex("p1"), "answer one", false, "2026-01-01T00:00:00Z"},
                                            {"other", sha256_hex("p1"), "not mine", false, ""}};
  const ReplayGenerationProvider replay(entries, "m");
  const auto g = replay.generate("p1");
  CHECK(g.text == "answer one");
  CHECK(g.timestamp == "2026-01-01T00:00:00Z");
  try {
    replay.generate("p2");
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find(sha256_hex("p2")) != std::string::npos);
  }

  TempDir tmp("replay");
  {
    std::ofstream out(tmp / "r.jsonl");
    write_replay_entries(out, entries);
  }
  CHECK(ReplayGenerationProvider(tmp / "r.jsonl", "other").generate("p1").text == "not mine");
  spit(tmp / "bad.jsonl", "{\"model\": \"m\"}\n");
  CHECK_THROWS_AS(ReplayGenerationProvider(tmp / "bad.jsonl", "m"), ParseError);
}

TEST_CASE("http generation client speaks the /generate protocol") {
  MockServer mock;
  nlohmann::json last;
  mock.server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    last = nlohmann::json::parse(req.body);
    const auto prompt = last["prompt"].get<std::string>();
    nlohmann::json out = {{"text", "echo " + prompt}};
    if (prompt == "long") out["finish_reason"] = "length";
    if (prompt == "cut") out["truncated"] = true;
    res.set_content(out.dump(), "application/json");
  });
  mock.server.Post("/broken/generate", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"answer":"x"})", "application/json");
  });
  mock.start();

  const HttpGenerationProvider http(mock.url(), "llama-3-8b", 128, no_wait());
  const auto g = http.generate("hello");
  CHECK(g.text == "echo hello");
  CHECK_FALSE(g.truncated);
  CHECK(g.timestamp.empty());
  CHECK(last["model"] == "llama-3-8b");
  CHECK(last["temperature"] == 0);
  CHECK(last["max_tokens"] == 128);
  CHECK(http.generate("long").truncated);
  CHECK(http.generate("cut").truncated);
  CHECK_THROWS_AS(HttpGenerationProvider(mock.url() + "/broken", "m", 16, no_wait()).generate("x"), ProtocolError);
}

TEST_CASE("record JSON round trip") {
  RunRecord r;
  r.query_ref = "3:adverse_effects";
  r.medicine_id = 3;
  r.slot = Slot::AdverseEffects;
  r.condition = Condition::LeastContradictory;
  r.context_pmids = {"1", "22"};
  r.prompt = "multi\nline \"prompt\" \xc2\xb5g";
  r.answer = "Insufficient evidence";
  r.insufficient = true;
  r.model_tag = "m";
  r.timestamp = "2026-01-01T00:00:00Z";
  r.warnings = {"answer hit the token limit"};
  r.truncated = true;
  CHECK(record_from_json(record_to_json(r)) == r);

  std::stringstream s;
  write_records(s, {r, r});
  CHECK(read_records(s).size() == 2);

  auto j = nlohmann::json::parse(record_to_json(r));
  j["insufficient"] = false;
  CHECK_THROWS_AS(record_from_json(j.dump(), 7), ParseError);
  j = nlohmann::json::parse(record_to_json(r));
  j["condition"] = "xx";
  CHECK_THROWS_AS(record_from_json(j.dump()), ParseError);
}

TEST_CASE("experiment cardinality and record contents") {
  const Experiment e;
  const CountingModel a("model-a"), b("model-b");
  RunOptions opt;
  opt.clock = [] { return std::string("2026-02-02T00:00:00Z"); };
  std::atomic<int> seen{0};
  opt.on_record = [&](const RunRecord&) { ++seen; };
  opt.workers = 3;
  const auto res = run_experiment(e.corpus, e.rankings, e.reports, {&a, &b}, opt);

  std::size_t nonempty = 0;
  for (const auto& q : e.corpus.queries) nonempty += !e.corpus.pool(q.id()).documents.empty();
  CHECK(nonempty == 17);
  CHECK(res.records.size() == nonempty * 3 * 2);
  CHECK(res.failures.empty());
  CHECK(seen == static_cast<int>(res.records.size()));
  CHECK(std::is_sorted(res.records.begin(), res.records.end(), record_before));
  for (const auto& r : res.records) {
    CHECK(r.timestamp == "2026-02-02T00:00:00Z");
    CHECK(r.context_pmids.size() == std::min<std::size_t>(5, e.corpus.pool(r.query_ref).documents.size()));
    CHECK(r.insufficient == (r.context_pmids.size() < 2));
    CHECK(r.insufficient == (r.answer == kInsufficientEvidence));
    CHECK(r.warnings.empty());
  }

  // Same inputs, same records.
  RunOptions serial = opt;
  serial.workers = 1;
  serial.on_record = nullptr;
  CHECK(run_experiment(e.corpus, e.rankings, e.reports, {&a, &b}, serial).records == res.records);

  RunOptions only_ms = serial;
  only_ms.conditions = {Condition::MostSimilar};
  CHECK(run_experiment(e.corpus, e.rankings, {}, {&a}, only_ms).records.size() == nonempty);
}

TEST_CASE("experiment resume, warnings and failures") {
  const Experiment e;
  CountingModel a("model-a");
  RunOptions opt;
  opt.clock = [] { return std::string("2026-02-02T00:00:00Z"); };
  const auto full = run_experiment(e.corpus, e.rankings, e.reports, {&a}, opt);
  const int first_calls = a.calls;
  CHECK(first_calls == 51);

  std::vector<RunRecord> partial(full.records.begin(), full.records.begin() + 20);
  const auto resumed = run_experiment(e.corpus, e.rankings, e.reports, {&a}, opt, partial);
  CHECK(resumed.skipped_existing == 20);
  CHECK(a.calls == first_calls + 31);
  CHECK(resumed.records == full.records);

  CountingModel flaky("model-a");
  flaky.fail_on = "METFORMIN";
  flaky.empty_on = "WARFARIN";
  flaky.truncate_on = "AMOXICILLIN";
  const auto res = run_experiment(e.corpus, e.rankings, e.reports, {&flaky}, opt);
  CHECK(res.failures.size() == 18);
  for (const auto& f : res.failures) {
    CHECK(f.query_ref.rfind("2:", 0) == 0);
    CHECK(f.error.find("503") != std::string::npos);
  }
  for (const auto& r : res.records) {
    if (r.medicine_id == 3) {
      CHECK(r.answer.empty());
      CHECK(r.warnings == std::vector<std::string>{"empty answer"});
    } else {
      CHECK(r.truncated);
      CHECK(r.warnings == std::vector<std::string>{"answer hit the token limit"});
    }
  }

  auto missing = e.rankings;
  missing.erase("1:dosage");
  const auto gap = run_experiment(e.corpus, missing, e.reports, {&a}, opt);
  CHECK(gap.failures.size() == 3);
}
