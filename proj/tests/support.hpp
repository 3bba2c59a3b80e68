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

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medrag/corpus.hpp"
#include "medrag/embedding.hpp"
#include "medrag/hashing.hpp"
#include "medrag/nli.hpp"

namespace medrag::test {

namespace fs = std::filesystem;

inline fs::path fixture_corpus() { return fs::path(MEDRAG_SOURCE_DIR) / "fixtures" / "corpus.jsonl"; }
inline fs::path fixture_bundle() { return fs::path(MEDRAG_FIXTURE_BUNDLE); }
inline fs::path test_data(const std::string& rel) { return fs::path(MEDRAG_SOURCE_DIR) / "tests" / "data" / rel; }

/// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::random_device rd;
    path_ = fs::temp_directory_path() / ("medrag-" + tag + "-" + std::to_string(rd()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const fs::path& p, const std::string& data) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << data;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }
  double real(double lo = 0, double hi = 1) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  bool coin(double p = 0.5) { return real() < p; }
  Eigen::VectorXd vector(Eigen::Index dim) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = std::normal_distribution<double>()(gen_);
    return v;
  }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline Document doc(const std::string& pmid, int year, long long cites, const std::string& text = "") {
  return make_document(pmid, year, cites, text.empty() ? "Abstract of " + pmid + "." : text);
}

/// Embeddings from a fixed table; unknown texts raise LookupError.
class TableEmbeddings final : public EmbeddingProvider {
 public:
  explicit TableEmbeddings(std::size_t dim, std::string tag = "table") : dim_(dim), tag_(std::move(tag)) {}
  void set(const std::string& text, Eigen::VectorXd v) { table_[text] = Embedding(std::move(v)); }

  std::size_t dimension() const override { return dim_; }
  const std::string& model_tag() const override { return tag_; }
  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    ++calls;
    std::vector<Embedding> out;
    for (const auto& t : texts) {
      const auto it = table_.find(t);
      if (it == table_.end()) throw LookupError("no vector for " + t);
      out.push_back(it->second);
    }
    return out;
  }
  mutable std::size_t calls = 0;

 private:
  std::size_t dim_;
  std::string tag_;
  std::map<std::string, Embedding> table_;
};

/// NLI results from a fixed table keyed by (premise, hypothesis).
class TableNli final : public NliProvider {
 public:
  void set(const std::string& p, const std::string& h, double con) {
    table_[{p, h}] = {(1 - con) / 2, (1 - con) / 2, con};
  }
  const std::string& model_tag() const override { return tag_; }
  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const override {
    ++calls;
    std::vector<NliProbs> out;
    for (const auto& p : pairs) {
      const auto it = table_.find({p.premise, p.hypothesis});
      out.push_back(it == table_.end() ? NliProbs{0.1, 0.8, 0.1} : it->second);
    }
    return out;
  }
  mutable std::size_t calls = 0;

 private:
  std::string tag_ = "table-nli";
  std::map<std::pair<std::string, std::string>, NliProbs> table_;
};

}  // namespace medrag::test
