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

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medrag/embedding.hpp"
#include "medrag/http.hpp"

namespace medrag {

/// Clipped n-gram overlap F1 over word_tokens(). 0 when either side has no
/// n-grams.
double rouge_n(std::string_view reference, std::string_view candidate, int n);

/// Longest-common-subsequence F1 over word_tokens().
double rouge_l(std::string_view reference, std::string_view candidate);

using TokenDistribution = std::map<std::string, double>;

/// Relative unigram frequencies. Throws DomainError when there are no tokens.
TokenDistribution token_distribution(std::string_view text);

/// Jensen-Shannon divergence, natural log; in [0, ln 2].
double jsd(const TokenDistribution& p, const TokenDistribution& q);

inline constexpr double kKldSmoothing = 1e-10;

/// KL(p || q~) where q~ adds `smoothing` to q over the union vocabulary and
/// renormalises.
double kld(const TokenDistribution& p, const TokenDistribution& q, double smoothing = kKldSmoothing);

struct Similarity {
  double cos = 0;
  double dot = 0;
};

/// Cosine and dot product of whole-text embeddings.
Similarity embedding_similarity(std::string_view reference, std::string_view candidate,
                                const EmbeddingProvider& provider);

/// Per-token vectors; a zero vector means out of vocabulary.
class WordVectorProvider {
 public:
  virtual ~WordVectorProvider() = default;
  virtual ProviderKind kind() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<Eigen::VectorXd> lookup(const std::vector<std::string>& tokens) const = 0;
};

/// word2vec text format: a "<count> <dimension>" header, then one
/// "<token> v1 ... vD" line per token.
class FileBackedWordVectors final : public WordVectorProvider {
 public:
  explicit FileBackedWordVectors(const std::filesystem::path& path);
  FileBackedWordVectors(std::unordered_map<std::string, Eigen::VectorXd> table, std::size_t dimension);

  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<Eigen::VectorXd> lookup(const std::vector<std::string>& tokens) const override;

 private:
  std::unordered_map<std::string, Eigen::VectorXd> table_;
  std::size_t dimension_ = 0;
};

/// Word vectors served through POST /embed under a word-vector model tag.
class HttpWordVectors final : public WordVectorProvider {
 public:
  HttpWordVectors(std::string base_url, std::string model_tag, std::size_t dimension, RetryPolicy retry = {});

  ProviderKind kind() const override { return ProviderKind::HttpService; }
  std::size_t dimension() const override { return embedder_.dimension(); }
  std::vector<Eigen::VectorXd> lookup(const std::vector<std::string>& tokens) const override;

 private:
  HttpEmbeddingProvider embedder_;
};

/// Cosine and dot of mean in-vocabulary token vectors; nullopt when either
/// text has no in-vocabulary token.
std::optional<Similarity> vsim(std::string_view reference, std::string_view candidate,
                               const WordVectorProvider& provider);

/// Every metric for one answer; nullopt marks a value that is undefined for
/// this pair and is left out of averages.
struct MetricScores {
  std::optional<double> r1, r2, rl;
  std::optional<double> bert_cos, bert_dot;
  std::optional<double> vsim_cos, vsim_dot;
  std::optional<double> jsd, kld;
};

inline constexpr std::size_t kMetricCount = 9;
inline constexpr std::array<std::string_view, kMetricCount> kMetricNames = {
    "R1", "R2", "RL", "BERT_cos", "BERT_dot", "VSIM_cos", "VSIM_dot", "JSD", "KLD"};

std::array<std::optional<double>, kMetricCount> as_array(const MetricScores& s);
MetricScores from_array(const std::array<std::optional<double>, kMetricCount>& a);

MetricScores score_answer(std::string_view reference, std::string_view candidate,
                          const EmbeddingProvider& encoder, const WordVectorProvider& word_vectors);

/// Mean over queries within each medicine, then over medicines. Missing
/// values are skipped metric by metric.
MetricScores macro_average(const std::vector<std::pair<int, MetricScores>>& per_query);

}  // namespace medrag
