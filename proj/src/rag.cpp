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

#include "medrag/rag.hpp"

#include <algorithm>
#include <chrono>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <set>
#include <nlohmann/json.hpp>

#include "medrag/hashing.hpp"
#include "medrag/parallel.hpp"
#include "medrag/prompt_template.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

int condition_rank(Condition c) { return static_cast<int>(c); }

using CellKey = std::tuple<std::string, Condition, std::string>;

CellKey key_of(const RunRecord& r) { return {r.query_ref, r.condition, r.model_tag}; }

}  // namespace

std::string_view condition_code(Condition c) {
  switch (c) {
    case Condition::MostSimilar: return "ms";
    case Condition::MostContradictory: return "mc";
    case Condition::LeastContradictory: return "lc";
  }
  return "?";
}

Condition parse_condition(std::string_view s) {
  const auto l = to_lower(s);
  if (l == "ms" || l == "most_similar") return Condition::MostSimilar;
  if (l == "mc" || l == "most_contradictory") return Condition::MostContradictory;
  if (l == "lc" || l == "least_contradictory") return Condition::LeastContradictory;
  throw ConfigError("unknown retrieval condition '" + std::string(s) + "'");
}

std::vector<std::string> build_context(std::span<const ScoredDocument> ranked, const ContradictionReport* report,
                                       Condition condition, std::size_t k) {
  if (k < 1) throw ConfigError("k must be at least 1");
  if (condition == Condition::MostSimilar) {
    std::vector<std::string> out;
    for (const auto& s : top_k_similar(ranked, k)) out.push_back(s.pmid);
    return out;
  }
  if (!report) {
    throw ConfigError(std::string("condition ") + std::string(condition_code(condition)) +
                      " needs a contradiction report");
  }
  if (report->pmids.empty()) return {};
  auto sets = contradiction_contexts(*report, k);
  return condition == Condition::MostContradictory ? sets.most : sets.least;
}

std::string_view default_prompt_template() { return detail::kDefaultPromptTemplate; }
std::string_view default_prompt_template_name() { return detail::kDefaultPromptTemplateName; }

std::string build_prompt(const QueryInstance& query, std::span<const Document* const> context,
                         std::string_view tmpl) {
  if (context.empty()) throw DomainError("build_prompt: empty context");
  std::string abstracts;
  for (std::size_t i = 0; i < context.size(); ++i) {
    const auto& d = *context[i];
    abstracts += fmt::format("[Abstract {} | PMID {} | {}]\n{}\n\n", i + 1, d.pmid, d.year, d.text);
  }
  std::string out(tmpl);
  // Question first: abstracts may legitimately contain "{{question}}".
  replace_all(out, "{{question}}", query.text);
  replace_all(out, "{{abstracts}}", abstracts);
  return out;
}

std::string normalize_answer(std::string_view raw) {
  const auto t = trim(raw);
  std::string letters;
  for (char c : t) {
    if (is_word_char(c)) {
      letters += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (is_space(c) && !letters.empty() && letters.back() != ' ') {
      letters += ' ';
    }
  }
  while (!letters.empty() && letters.back() == ' ') letters.pop_back();
  if (letters == "insufficient evidence") return std::string(kInsufficientEvidence);
  return std::string(t);
}

HttpGenerationProvider::HttpGenerationProvider(std::string base_url, std::string model_tag, int max_tokens,
                                               RetryPolicy retry)
    : client_(std::move(base_url), std::move(retry)), model_tag_(std::move(model_tag)), max_tokens_(max_tokens) {}

Generation HttpGenerationProvider::generate(const std::string& prompt) const {
  nlohmann::json req;
  req["model"] = model_tag_;
  req["prompt"] = prompt;
  req["temperature"] = 0;
  req["max_tokens"] = max_tokens_;
  const auto res = client_.post_json("/generate", req);
  if (!res.contains("text") || !res["text"].is_string()) throw ProtocolError("/generate: missing text");
  Generation g;
  g.text = res["text"].get<std::string>();
  g.truncated = res.value("truncated", false) || res.value("finish_reason", "") == "length";
  return g;
}

ReplayGenerationProvider::ReplayGenerationProvider(const std::filesystem::path& path, std::string model_tag)
    : model_tag_(std::move(model_tag)) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ReplayEntry e{j.at("model").get<std::string>(), j.at("prompt_hash").get<std::string>(),
                    j.at("text").get<std::string>(), j.value("truncated", false), j.value("timestamp", "")};
      if (e.model == model_tag_) by_hash_.insert_or_assign(e.prompt_hash, std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, path.string() + ": " + e.what());
    }
  }
}

ReplayGenerationProvider::ReplayGenerationProvider(std::vector<ReplayEntry> entries, std::string model_tag)
    : model_tag_(std::move(model_tag)) {
  for (auto& e : entries) {
    if (e.model == model_tag_) by_hash_.insert_or_assign(e.prompt_hash, std::move(e));
  }
}

Generation ReplayGenerationProvider::generate(const std::string& prompt) const {
  const auto h = sha256_hex(prompt);
  const auto it = by_hash_.find(h);
  if (it == by_hash_.end()) throw LookupError("no recorded answer from " + model_tag_ + " for prompt " + h);
  return {it->second.text, it->second.truncated, it->second.timestamp};
}

void write_replay_entries(std::ostream& out, const std::vector<ReplayEntry>& entries) {
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["model"] = e.model;
    j["prompt_hash"] = e.prompt_hash;
    j["text"] = e.text;
    j["truncated"] = e.truncated;
    j["timestamp"] = e.timestamp;
    out << j.dump() << '\n';
  }
}

bool record_before(const RunRecord& a, const RunRecord& b) {
  if (a.medicine_id != b.medicine_id) return a.medicine_id < b.medicine_id;
  if (a.slot != b.slot) return slot_index(a.slot) < slot_index(b.slot);
  if (a.condition != b.condition) return condition_rank(a.condition) < condition_rank(b.condition);
  return a.model_tag < b.model_tag;
}

std::string record_to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["query_ref"] = r.query_ref;
  j["medicine_id"] = r.medicine_id;
  j["slot"] = slot_name(r.slot);
  j["condition"] = condition_code(r.condition);
  j["model"] = r.model_tag;
  j["context_pmids"] = r.context_pmids;
  j["prompt"] = r.prompt;
  j["answer"] = r.answer;
  j["insufficient"] = r.insufficient;
  j["truncated"] = r.truncated;
  j["timestamp"] = r.timestamp;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j.dump();
}

RunRecord record_from_json(std::string_view line, std::size_t line_no) {
  try {
    const auto j = nlohmann::json::parse(line);
    RunRecord r;
    r.query_ref = j.at("query_ref").get<std::string>();
    r.medicine_id = j.at("medicine_id").get<int>();
    r.slot = parse_slot(j.at("slot").get<std::string>());
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.model_tag = j.at("model").get<std::string>();
    r.context_pmids = j.at("context_pmids").get<std::vector<std::string>>();
    r.prompt = j.at("prompt").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.insufficient = j.at("insufficient").get<bool>();
    r.truncated = j.value("truncated", false);
    r.timestamp = j.value("timestamp", "");
    if (j.contains("warnings")) r.warnings = j["warnings"].get<std::vector<std::string>>();
    if (r.insufficient != (r.answer == kInsufficientEvidence)) {
      throw ParseError(line_no, "insufficient flag disagrees with the answer");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, std::string("run record: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(line_no, e.what());
  }
}

void write_records(std::ostream& out, const std::vector<RunRecord>& records) {
  for (const auto& r : records) out << record_to_json(r) << '\n';
}

std::vector<RunRecord> read_records(std::istream& in) {
  std::vector<RunRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    out.push_back(record_from_json(line, n));
  }
  return out;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

RunResult run_experiment(const Corpus& selected, const std::map<std::string, std::vector<ScoredDocument>>& rankings,
                         const std::map<std::string, ContradictionReport>& reports,
                         const std::vector<const GenerationProvider*>& models, const RunOptions& options,
                         std::vector<RunRecord> existing) {
  RunResult result;
  std::set<CellKey> done;
  for (auto& r : existing) {
    if (done.insert(key_of(r)).second) result.records.push_back(std::move(r));
  }

  struct Cell {
    const QueryInstance* query;
    Condition condition;
    const GenerationProvider* model;
  };
  std::vector<Cell> cells;
  for (const auto& q : selected.queries) {
    if (selected.pool(q.id()).documents.empty()) continue;
    for (auto c : options.conditions) {
      for (const auto* m : models) {
        if (done.count({q.id(), c, m->model_tag()})) {
          ++result.skipped_existing;
          continue;
        }
        cells.push_back({&q, c, m});
      }
    }
  }

  std::mutex mu;
  const auto clock = options.clock ? options.clock : utc_now_iso8601;
  parallel_for(cells.size(), options.workers, [&](std::size_t i) {
    const auto& cell = cells[i];
    const auto ref = cell.query->id();
    try {
      const auto& pool = selected.pool(ref);
      const auto rit = rankings.find(ref);
      if (rit == rankings.end()) throw UpstreamError("no ranking for " + ref);
      const auto cit = reports.find(ref);
      const auto pmids = build_context(rit->second, cit == reports.end() ? nullptr : &cit->second,
                                       cell.condition, options.k);
      std::vector<const Document*> docs;
      for (const auto& p : pmids) {
        const auto d = std::find_if(pool.documents.begin(), pool.documents.end(),
                                    [&](const Document& x) { return x.pmid == p; });
        if (d == pool.documents.end()) throw IntegrityError("context pmid " + p + " is not in pool " + ref);
        docs.push_back(&*d);
      }
      RunRecord r;
      r.query_ref = ref;
      r.medicine_id = cell.query->medicine_id;
      r.slot = cell.query->slot;
      r.condition = cell.condition;
      r.context_pmids = pmids;
      r.prompt = build_prompt(*cell.query, docs, options.prompt_template);
      r.model_tag = cell.model->model_tag();
      const auto g = cell.model->generate(r.prompt);
      r.answer = normalize_answer(g.text);
      r.insufficient = r.answer == kInsufficientEvidence;
      r.truncated = g.truncated;
      if (r.answer.empty()) r.warnings.push_back("empty answer");
      if (g.truncated) r.warnings.push_back("answer hit the token limit");
      r.timestamp = g.timestamp.empty() ? clock() : g.timestamp;
      std::lock_guard lock(mu);
      if (options.on_record) options.on_record(r);
      result.records.push_back(std::move(r));
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      result.failures.push_back({ref, cell.condition, cell.model->model_tag(), e.what()});
    }
  });

  std::sort(result.records.begin(), result.records.end(), record_before);
  std::sort(result.failures.begin(), result.failures.end(), [](const FailedCell& a, const FailedCell& b) {
    return std::tie(a.query_ref, a.condition, a.model_tag) < std::tie(b.query_ref, b.condition, b.model_tag);
  });
  return result;
}

}  // namespace medrag
