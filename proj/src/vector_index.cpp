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

#include "medrag/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_set>

namespace medrag {
namespace {

Eigen::VectorXd unit_vector(const Embedding& e) {
  if (e.norm() == 0) throw DomainError("cosine: zero-norm vector");
  return e.values() / e.norm();
}

bool neighbor_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

// splitmix64
std::uint64_t next_random(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

void VectorIndex::check_mutable() const {
  if (frozen_) throw Error("vector index is frozen");
}

std::size_t ExactIndex::add(const Embedding& e) {
  check_mutable();
  if (!unit_.empty() && e.dimension() != unit_.front().size()) {
    throw DomainError("vector index: dimension mismatch");
  }
  unit_.push_back(unit_vector(e));
  return unit_.size() - 1;
}

std::vector<Neighbor> ExactIndex::search(const Embedding& query, std::size_t k) const {
  const auto q = unit_vector(query);
  std::vector<Neighbor> all;
  all.reserve(unit_.size());
  for (std::size_t i = 0; i < unit_.size(); ++i) all.push_back({i, unit_[i].dot(q)});
  const auto n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), neighbor_before);
  all.resize(n);
  return all;
}

HnswIndex::HnswIndex(HnswParams params)
    : params_(params),
      level_mult_(1.0 / std::log(static_cast<double>(std::max<std::size_t>(2, params.m)))),
      rng_state_(params.seed) {}

double HnswIndex::distance(const Eigen::VectorXd& q, Id id) const { return 1.0 - unit_[id].dot(q); }

int HnswIndex::draw_level() {
  const double u = static_cast<double>(next_random(rng_state_) >> 11) * 0x1.0p-53;
  return static_cast<int>(std::floor(-std::log(1.0 - u) * level_mult_));
}

std::vector<HnswIndex::Cand> HnswIndex::search_layer(const Eigen::VectorXd& q, std::vector<Cand> entry,
                                                     std::size_t ef, int layer) const {
  auto closer = [](const Cand& a, const Cand& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
  };
  auto farther = [&](const Cand& a, const Cand& b) { return closer(b, a); };
  std::priority_queue<Cand, std::vector<Cand>, decltype(farther)> frontier(farther);  // min-heap
  std::priority_queue<Cand, std::vector<Cand>, decltype(closer)> best(closer);        // max-heap
  std::unordered_set<Id> seen;
  for (const auto& c : entry) {
    if (!seen.insert(c.id).second) continue;
    frontier.push(c);
    best.push(c);
  }
  while (best.size() > ef) best.pop();

  while (!frontier.empty()) {
    const Cand c = frontier.top();
    frontier.pop();
    if (best.size() >= ef && closer(best.top(), c)) break;
    for (Id nb : links_[c.id][static_cast<std::size_t>(layer)]) {
      if (!seen.insert(nb).second) continue;
      const Cand n{distance(q, nb), nb};
      if (best.size() < ef || closer(n, best.top())) {
        frontier.push(n);
        best.push(n);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Cand> out;
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<HnswIndex::Id> HnswIndex::select_neighbors(std::vector<Cand> cands, std::size_t m) const {
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
  });
  std::vector<Id> out;
  for (const auto& c : cands) {
    if (out.size() == m) break;
    out.push_back(c.id);
  }
  return out;
}

std::size_t HnswIndex::add(const Embedding& e) {
  check_mutable();
  if (!unit_.empty() && e.dimension() != unit_.front().size()) {
    throw DomainError("vector index: dimension mismatch");
  }
  const Id id = static_cast<Id>(unit_.size());
  unit_.push_back(unit_vector(e));
  const auto& q = unit_.back();
  const int level = draw_level();
  links_.emplace_back(static_cast<std::size_t>(level) + 1);

  if (top_layer_ < 0) {
    entry_ = id;
    top_layer_ = level;
    return id;
  }

  std::vector<Cand> ep{{distance(q, entry_), entry_}};
  for (int l = top_layer_; l > level; --l) ep = search_layer(q, ep, 1, l);

  for (int l = std::min(level, top_layer_); l >= 0; --l) {
    auto found = search_layer(q, ep, params_.ef_construction, l);
    const auto lu = static_cast<std::size_t>(l);
    const std::size_t cap = l == 0 ? 2 * params_.m : params_.m;
    links_[id][lu] = select_neighbors(found, params_.m);
    for (Id nb : links_[id][lu]) {
      auto& nl = links_[nb][lu];
      nl.push_back(id);
      if (nl.size() > cap) {
        std::vector<Cand> cs;
        for (Id x : nl) cs.push_back({1.0 - unit_[nb].dot(unit_[x]), x});
        nl = select_neighbors(std::move(cs), cap);
      }
    }
    ep = std::move(found);
  }
  if (level > top_layer_) {
    top_layer_ = level;
    entry_ = id;
  }
  return id;
}

std::vector<Neighbor> HnswIndex::search(const Embedding& query, std::size_t k) const {
  if (unit_.empty() || k == 0) return {};
  const auto q = unit_vector(query);
  if (q.size() != unit_.front().size()) throw DomainError("vector index: dimension mismatch");
  std::vector<Cand> ep{{distance(q, entry_), entry_}};
  for (int l = top_layer_; l > 0; --l) ep = search_layer(q, ep, 1, l);
  auto found = search_layer(q, ep, std::max(params_.ef_search, k), 0);
  std::vector<Neighbor> out;
  for (const auto& c : found) out.push_back({c.id, unit_[c.id].dot(q)});
  std::sort(out.begin(), out.end(), neighbor_before);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace medrag
