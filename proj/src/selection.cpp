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

#include "medrag/selection.hpp"

#include <algorithm>
#include <set>

#include "medrag/text.hpp"

namespace medrag {

bool cites_before(const Document& a, const Document& b) {
  if (a.citations != b.citations) return a.citations > b.citations;
  return pmid_less(a.pmid, b.pmid);
}

std::vector<int> stratified_sample_years(std::vector<int> years, std::size_t target, int gap) {
  std::sort(years.begin(), years.end());
  years.erase(std::unique(years.begin(), years.end()), years.end());
  if (target == 0) return {};
  if (years.size() <= target) return years;

  std::vector<int> greedy;
  for (int y : years) {
    if (greedy.empty() || y - greedy.back() >= gap) greedy.push_back(y);
  }

  std::vector<int> picked;
  if (greedy.size() > target) {
    const std::size_t n = greedy.size() - 1;
    const std::size_t m = target - 1;
    for (std::size_t i = 0; i < target; ++i) {
      picked.push_back(m == 0 ? greedy.front() : greedy[(i * n + m / 2) / m]);
    }
  } else {
    picked = greedy;
    const std::set<int> have(picked.begin(), picked.end());
    for (auto it = years.rbegin(); it != years.rend() && picked.size() < target; ++it) {
      if (!have.count(*it)) picked.push_back(*it);
    }
    std::sort(picked.begin(), picked.end());
  }
  if (picked.back() != years.back()) picked.back() = years.back();
  return picked;
}

EvidencePool select_balanced(const EvidencePool& raw, const SelectionParams& params) {
  EvidencePool out;
  out.query_ref = raw.query_ref;
  out.stage = PoolStage::Selected;
  if (raw.documents.empty()) return out;

  std::map<int, YearStratum> strata;
  for (const auto& d : raw.documents) {
    auto& s = strata[d.year];
    s.year = d.year;
    s.ranked_docs.push_back(&d);
  }

  std::vector<int> years;
  for (const auto& [y, s] : strata) years.push_back(y);
  if (years.size() >= params.year_target) {
    years = stratified_sample_years(years, params.year_target, params.year_gap);
  }

  std::vector<YearStratum*> active;
  for (int y : years) {
    auto& s = strata.at(y);
    std::stable_sort(s.ranked_docs.begin(), s.ranked_docs.end(),
                     [](const Document* a, const Document* b) { return cites_before(*a, *b); });
    active.push_back(&s);
  }

  std::vector<std::size_t> cursor(active.size(), 0);
  bool progressed = true;
  while (out.documents.size() < params.cap && progressed) {
    progressed = false;
    for (std::size_t i = 0; i < active.size() && out.documents.size() < params.cap; ++i) {
      if (cursor[i] < active[i]->ranked_docs.size()) {
        out.documents.push_back(*active[i]->ranked_docs[cursor[i]++]);
        progressed = true;
      }
    }
  }
  return out;
}

std::map<int, std::size_t> year_histogram(const EvidencePool& pool) {
  std::map<int, std::size_t> h;
  for (const auto& d : pool.documents) h[d.year]++;
  return h;
}

Corpus select_corpus(const Corpus& raw, const SelectionParams& params) {
  Corpus out = raw;
  for (auto& [ref, pool] : out.pools) pool = select_balanced(raw.pools.at(ref), params);
  return out;
}

}  // namespace medrag
