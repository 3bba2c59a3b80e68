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

#include "medrag/evaluation.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>
#include <ostream>

#include "medrag/csv.hpp"
#include "medrag/parallel.hpp"

namespace medrag {
namespace {

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

std::vector<ScoredRecord> score_records(const Corpus& corpus, const std::vector<RunRecord>& records,
                                        const EmbeddingProvider& encoder, const WordVectorProvider& word_vectors,
                                        std::size_t workers) {
  std::vector<const RunRecord*> todo;
  for (const auto& r : records) {
    if (!corpus.query(r.query_ref).reference_answer.empty()) todo.push_back(&r);
  }
  std::vector<ScoredRecord> out(todo.size());
  parallel_for(todo.size(), workers, [&](std::size_t i) {
    const auto& r = *todo[i];
    auto& s = out[i];
    s.query_ref = r.query_ref;
    s.medicine_id = r.medicine_id;
    s.slot = r.slot;
    s.condition = r.condition;
    s.model_tag = r.model_tag;
    s.scores = score_answer(corpus.query(r.query_ref).reference_answer, r.answer, encoder, word_vectors);
  });
  return out;
}

std::vector<MetricsRow> aggregate(const std::vector<ScoredRecord>& scored) {
  std::map<std::pair<std::string, Condition>, std::vector<std::pair<int, MetricScores>>> groups;
  for (const auto& s : scored) groups[{s.model_tag, s.condition}].emplace_back(s.medicine_id, s.scores);
  std::vector<MetricsRow> rows;
  for (const auto& [key, items] : groups) {
    rows.push_back({key.first, key.second, macro_average(items), items.size()});
  }
  return rows;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  csv::Row header = {"model", "condition"};
  for (auto n : kMetricNames) header.emplace_back(n);
  csv::write_row(out, header);
  for (const auto& r : rows) {
    csv::Row row = {r.model_tag, std::string(condition_code(r.condition))};
    for (const auto& v : as_array(r.mean)) row.push_back(cell(v));
    csv::write_row(out, row);
  }
}

void write_scores_csv(std::ostream& out, const std::vector<ScoredRecord>& scored) {
  csv::Row header = {"query_ref", "model", "condition"};
  for (auto n : kMetricNames) header.emplace_back(n);
  csv::write_row(out, header);
  for (const auto& s : scored) {
    csv::Row row = {s.query_ref, s.model_tag, std::string(condition_code(s.condition))};
    for (const auto& v : as_array(s.scores)) row.push_back(cell(v));
    csv::write_row(out, row);
  }
}

}  // namespace medrag
