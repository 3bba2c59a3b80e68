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

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "medrag/contradiction.hpp"
#include "medrag/corpus.hpp"
#include "medrag/http.hpp"
#include "medrag/ranking.hpp"

namespace medrag {

enum class Condition { MostSimilar, MostContradictory, LeastContradictory };

inline constexpr std::array<Condition, 3> kAllConditions = {
    Condition::MostSimilar, Condition::MostContradictory, Condition::LeastContradictory};

/// "ms", "mc", "lc".
std::string_view condition_code(Condition c);
/// Accepts a code or the long name ("most_similar", ...). Throws ConfigError.
Condition parse_condition(std::string_view s);

inline constexpr std::string_view kInsufficientEvidence = "Insufficient evidence";

/// Context pmids for one condition, in the condition's ranking order.
/// Throws ConfigError when a contradiction condition has no report.
std::vector<std::string> build_context(std::span<const ScoredDocument> ranked, const ContradictionReport* report,
                                       Condition condition, std::size_t k);

/// The template compiled into the library (data/prompts/grounded_v1.txt).
std::string_view default_prompt_template();
std::string_view default_prompt_template_name();

/// Fills {{abstracts}} with one "[Abstract n | PMID p | year]" block per
/// document and {{question}} with the query text. Throws DomainError on an
/// empty context.
std::string build_prompt(const QueryInstance& query, std::span<const Document* const> context,
                         std::string_view tmpl = default_prompt_template());

/// Trims, and maps case or punctuation variants of the sentinel onto it.
std::string normalize_answer(std::string_view raw);

struct Generation {
  std::string text;
  bool truncated = false;
  std::string timestamp;  // set by replay providers; empty otherwise
};

enum class GenerationKind { HttpService, Replay };

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual const std::string& model_tag() const = 0;
  virtual GenerationKind kind() const = 0;
  virtual Generation generate(const std::string& prompt) const = 0;
};

inline constexpr int kMaxTokens = 256;

/// POST /generate {"model", "prompt", "temperature": 0, "max_tokens"} ->
/// {"text"}. A "truncated": true or "finish_reason": "length" field marks a
/// hit on the token limit.
class HttpGenerationProvider final : public GenerationProvider {
 public:
  HttpGenerationProvider(std::string base_url, std::string model_tag, int max_tokens = kMaxTokens,
                         RetryPolicy retry = {});

  const std::string& model_tag() const override { return model_tag_; }
  GenerationKind kind() const override { return GenerationKind::HttpService; }
  Generation generate(const std::string& prompt) const override;

 private:
  HttpClient client_;
  std::string model_tag_;
  int max_tokens_;
};

struct ReplayEntry {
  std::string model;
  std::string prompt_hash;
  std::string text;
  bool truncated = false;
  std::string timestamp;
};

/// Answers recorded as JSONL lines
/// {"model", "prompt_hash", "text", "truncated", "timestamp"}.
class ReplayGenerationProvider final : public GenerationProvider {
 public:
  ReplayGenerationProvider(const std::filesystem::path& path, std::string model_tag);
  ReplayGenerationProvider(std::vector<ReplayEntry> entries, std::string model_tag);

  const std::string& model_tag() const override { return model_tag_; }
  GenerationKind kind() const override { return GenerationKind::Replay; }
  /// Throws LookupError naming the prompt hash when nothing was recorded.
  Generation generate(const std::string& prompt) const override;

 private:
  std::string model_tag_;
  std::map<std::string, ReplayEntry> by_hash_;
};

void write_replay_entries(std::ostream& out, const std::vector<ReplayEntry>& entries);

struct RunRecord {
  std::string query_ref;
  int medicine_id = 0;
  Slot slot = Slot::Indications;
  Condition condition = Condition::MostSimilar;
  std::vector<std::string> context_pmids;
  std::string prompt;
  std::string answer;
  bool insufficient = false;
  bool truncated = false;
  std::string model_tag;
  std::string timestamp;
  std::vector<std::string> warnings;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

/// Canonical record order: medicine, slot, condition, model.
bool record_before(const RunRecord& a, const RunRecord& b);

std::string record_to_json(const RunRecord& r);
RunRecord record_from_json(std::string_view line, std::size_t line_no = 0);
void write_records(std::ostream& out, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(std::istream& in);

struct FailedCell {
  std::string query_ref;
  Condition condition = Condition::MostSimilar;
  std::string model_tag;
  std::string error;
};

struct RunOptions {
  std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
  std::size_t k = 5;
  std::size_t workers = 1;
  std::string prompt_template{default_prompt_template()};
  /// UTC timestamp for records whose provider supplies none.
  std::function<std::string()> clock;
  /// Called once per finished record, serialised.
  std::function<void(const RunRecord&)> on_record;
};

struct RunResult {
  std::vector<RunRecord> records;  // canonical order, including resumed ones
  std::vector<FailedCell> failures;
  std::size_t skipped_existing = 0;
};

/// One record per (query with a non-empty pool) x condition x model. Cells
/// already present in `existing` are kept and not regenerated.
RunResult run_experiment(const Corpus& selected, const std::map<std::string, std::vector<ScoredDocument>>& rankings,
                         const std::map<std::string, ContradictionReport>& reports,
                         const std::vector<const GenerationProvider*>& models, const RunOptions& options,
                         std::vector<RunRecord> existing = {});

std::string utc_now_iso8601();

}  // namespace medrag
