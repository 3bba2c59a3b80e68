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
#include <string>
#include <vector>

#include "medrag/corpus.hpp"
#include "medrag/metrics.hpp"
#include "medrag/rag.hpp"

namespace medrag {

struct ScoredRecord {
  std::string query_ref;
  int medicine_id = 0;
  Slot slot = Slot::Indications;
  Condition condition = Condition::MostSimilar;
  std::string model_tag;
  MetricScores scores;
};

struct MetricsRow {
  std::string model_tag;
  Condition condition = Condition::MostSimilar;
  MetricScores mean;
  std::size_t records = 0;
};

/// Scores each record against its query's reference answer. Records whose
/// reference is empty are skipped.
std::vector<ScoredRecord> score_records(const Corpus& corpus, const std::vector<RunRecord>& records,
                                        const EmbeddingProvider& encoder, const WordVectorProvider& word_vectors,
                                        std::size_t workers = 1);

/// Macro averages per (model, condition), ordered by model then condition.
std::vector<MetricsRow> aggregate(const std::vector<ScoredRecord>& scored);

/// Header model,condition,R1,R2,RL,BERT_cos,BERT_dot,VSIM_cos,VSIM_dot,JSD,KLD;
/// an undefined mean is left empty.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);

/// Per-record scores with query_ref,model,condition ahead of the metric columns.
void write_scores_csv(std::ostream& out, const std::vector<ScoredRecord>& scored);

}  // namespace medrag
