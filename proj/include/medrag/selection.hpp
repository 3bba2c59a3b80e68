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

#include <map>
#include <string>
#include <vector>

#include "medrag/corpus.hpp"

namespace medrag {

struct SelectionParams {
  std::size_t cap = kMaxSelectedPool;  // documents kept per pool
  std::size_t year_target = 20;        // stratify when this many distinct years exist
  int year_gap = 3;
};

/// Documents of one publication year, most cited first.
struct YearStratum {
  int year = 0;
  std::vector<const Document*> ranked_docs;
};

/// Citation order used within a stratum: citations descending, then the
/// numerically smaller pmid.
bool cites_before(const Document& a, const Document& b);

/// Picks `target` years out of at least `target` distinct ones.
///
/// A greedy pass from the earliest year keeps every year at least `gap`
/// after the previously kept one. Short of `target`, the most recent unkept
/// years fill the remaining slots; beyond it, the greedy picks are thinned
/// to evenly spaced ranks. The earliest and latest years are always kept.
/// Result is ascending.
std::vector<int> stratified_sample_years(std::vector<int> years, std::size_t target = 20,
                                         int gap = 3);

/// Temporal-citation balanced selection: round-robin over (possibly
/// stratified) years in ascending order, each visit taking the most cited
/// remaining document of that year, until `cap` documents are chosen or
/// the strata run dry. Output order is selection order.
EvidencePool select_balanced(const EvidencePool& raw, const SelectionParams& params = {});

/// year -> document count, for audit lines.
std::map<int, std::size_t> year_histogram(const EvidencePool& pool);

/// Applies select_balanced to every pool of a raw corpus.
Corpus select_corpus(const Corpus& raw, const SelectionParams& params = {});

}  // namespace medrag
