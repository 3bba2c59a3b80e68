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

#include <cstdint>
#include <vector>

#include "medrag/embedding.hpp"

namespace medrag {

struct Neighbor {
  std::size_t id = 0;  // insertion order
  double similarity = 0;
};

/// Cosine nearest-neighbour index. Results come back by similarity
/// descending, ties by id ascending. Once frozen, add() throws.
class VectorIndex {
 public:
  virtual ~VectorIndex() = default;
  /// Returns the id of the added vector.
  virtual std::size_t add(const Embedding& e) = 0;
  virtual std::vector<Neighbor> search(const Embedding& query, std::size_t k) const = 0;
  virtual std::size_t size() const = 0;
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 protected:
  void check_mutable() const;
  bool frozen_ = false;
};

/// Brute-force scan; the reference the approximate index is tested against.
class ExactIndex final : public VectorIndex {
 public:
  std::size_t add(const Embedding& e) override;
  std::vector<Neighbor> search(const Embedding& query, std::size_t k) const override;
  std::size_t size() const override { return unit_.size(); }

 private:
  std::vector<Eigen::VectorXd> unit_;
};

struct HnswParams {
  std::size_t m = 16;
  std::size_t ef_construction = 200;
  std::size_t ef_search = 64;
  std::uint64_t seed = 42;
};

/// Hierarchical navigable small-world graph. Level draws come from a seeded
/// generator, so a given insertion sequence always builds the same graph.
class HnswIndex final : public VectorIndex {
 public:
  explicit HnswIndex(HnswParams params = {});

  std::size_t add(const Embedding& e) override;
  std::vector<Neighbor> search(const Embedding& query, std::size_t k) const override;
  std::size_t size() const override { return unit_.size(); }
  const HnswParams& params() const { return params_; }

 private:
  using Id = std::uint32_t;
  struct Cand {
    double dist;
    Id id;
  };

  double distance(const Eigen::VectorXd& q, Id id) const;
  std::vector<Cand> search_layer(const Eigen::VectorXd& q, std::vector<Cand> entry, std::size_t ef,
                                 int layer) const;
  std::vector<Id> select_neighbors(std::vector<Cand> cands, std::size_t m) const;
  int draw_level();

  HnswParams params_;
  double level_mult_;
  std::uint64_t rng_state_;
  std::vector<Eigen::VectorXd> unit_;
  std::vector<std::vector<std::vector<Id>>> links_;  // node -> layer -> neighbours
  Id entry_ = 0;
  int top_layer_ = -1;
};

}  // namespace medrag
