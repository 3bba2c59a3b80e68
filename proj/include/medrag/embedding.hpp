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
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medrag/error.hpp"
#include "medrag/http.hpp"

namespace medrag {

/// A dense embedding with its Euclidean norm cached. Values are kept as
/// produced (unnormalised) so both dot products and cosines stay available.
template <typename Scalar>
class BasicEmbedding {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicEmbedding() = default;
  explicit BasicEmbedding(Vector values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw DomainError("embedding has non-finite entries");
    norm_ = values_.norm();
  }

  const Vector& values() const { return values_; }
  Scalar norm() const { return norm_; }
  Eigen::Index dimension() const { return values_.size(); }

  friend bool operator==(const BasicEmbedding& a, const BasicEmbedding& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  Vector values_;
  Scalar norm_{0};
};

using Embedding = BasicEmbedding<double>;

/// x'y / (|x| |y|). Throws DomainError on a dimension mismatch or a zero vector.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine(const Eigen::MatrixBase<DerivedA>& a,
                                 const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw DomainError("cosine: dimension mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na == Scalar(0) || nb == Scalar(0)) throw DomainError("cosine: zero-norm vector");
  return a.dot(b) / (na * nb);
}

template <typename Scalar>
Scalar cosine(const BasicEmbedding<Scalar>& a, const BasicEmbedding<Scalar>& b) {
  if (a.dimension() != b.dimension()) throw DomainError("cosine: dimension mismatch");
  if (a.norm() == Scalar(0) || b.norm() == Scalar(0)) throw DomainError("cosine: zero-norm vector");
  return a.values().dot(b.values()) / (a.norm() * b.norm());
}

/// Embeddings as the columns of a dense matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> stack_columns(
    std::span<const BasicEmbedding<Scalar>> embeddings) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m;
  if (embeddings.empty()) return m;
  m.resize(embeddings.front().dimension(), static_cast<Eigen::Index>(embeddings.size()));
  for (std::size_t j = 0; j < embeddings.size(); ++j) {
    if (embeddings[j].dimension() != m.rows()) throw DomainError("stack_columns: dimension mismatch");
    m.col(static_cast<Eigen::Index>(j)) = embeddings[j].values();
  }
  return m;
}

/// Columns scaled to unit length. Throws DomainError on a zero column.
template <typename Derived>
typename Derived::PlainObject normalized_columns(const Eigen::MatrixBase<Derived>& columns) {
  using Scalar = typename Derived::Scalar;
  typename Derived::PlainObject out = columns;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const Scalar n = out.col(j).norm();
    if (n == Scalar(0)) throw DomainError("cosine: zero-norm vector");
    out.col(j) /= n;
  }
  return out;
}

/// Pairwise cosine similarities between the columns.
template <typename Derived>
typename Derived::PlainObject cosine_matrix(const Eigen::MatrixBase<Derived>& columns) {
  const auto unit = normalized_columns(columns);
  return unit.transpose() * unit;
}

/// Cosine between `query` and every column.
template <typename DerivedQ, typename DerivedD>
Eigen::Matrix<typename DerivedD::Scalar, Eigen::Dynamic, 1> cosine_to(
    const Eigen::MatrixBase<DerivedQ>& query, const Eigen::MatrixBase<DerivedD>& columns) {
  using Scalar = typename DerivedD::Scalar;
  if (query.size() != columns.rows()) throw DomainError("cosine: dimension mismatch");
  const Scalar nq = query.norm();
  if (nq == Scalar(0)) throw DomainError("cosine: zero-norm vector");
  return normalized_columns(columns).transpose() * (query / nq);
}

/// Content hash used as the key of every embedding cache.
std::string text_hash(std::string_view text);

enum class ProviderKind { FileBacked, HttpService };

/// Text encoder contract: deterministic, constant dimension.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual const std::string& model_tag() const = 0;
  virtual ProviderKind kind() const = 0;
  /// One vector per text, in order.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) const = 0;
};

/// Checks preconditions and the provider's output shape around embed().
std::vector<Embedding> embed_batch(const EmbeddingProvider& provider,
                                   const std::vector<std::string>& texts);

/// On-disk embedding store:
///
///   <dir>/manifest.json              {"format", "dimension", "model_tag", "dtype"}
///   <dir>/vectors/<h0h1>/<hash>.bin  `dimension` little-endian float64 values
///
/// where <hash> is the SHA-256 of the UTF-8 text.
class EmbeddingStore {
 public:
  /// Opens an existing store. Throws Error when the manifest is missing.
  static EmbeddingStore open(const std::filesystem::path& dir);
  /// Opens or initialises a store; an existing manifest must match.
  static EmbeddingStore create(const std::filesystem::path& dir, std::size_t dimension,
                               const std::string& model_tag);

  std::optional<Embedding> find(std::string_view text) const;
  std::optional<Embedding> find_hash(const std::string& hash) const;
  void put(std::string_view text, const Embedding& embedding) const;

  std::size_t dimension() const { return dimension_; }
  const std::string& model_tag() const { return model_tag_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& hash) const;

  std::filesystem::path dir_;
  std::size_t dimension_ = 0;
  std::string model_tag_;
};

class FileBackedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileBackedEmbeddingProvider(EmbeddingStore store) : store_(std::move(store)) {}

  std::size_t dimension() const override { return store_.dimension(); }
  const std::string& model_tag() const override { return store_.model_tag(); }
  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  /// Throws LookupError naming the hash of the first text not in the store.
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;

 private:
  EmbeddingStore store_;
};

/// Client of the model server's POST /embed endpoint:
/// {"model", "texts": [...]} -> {"vectors": [[...], ...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, std::string model_tag, std::size_t dimension,
                        std::size_t batch_size = 64, RetryPolicy retry = {});

  std::size_t dimension() const override { return dimension_; }
  const std::string& model_tag() const override { return model_tag_; }
  ProviderKind kind() const override { return ProviderKind::HttpService; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;

 private:
  HttpClient client_;
  std::string model_tag_;
  std::size_t dimension_;
  std::size_t batch_size_;
};

/// Memoises another provider by content hash, optionally persisting into an
/// EmbeddingStore so later runs make no provider calls for known texts.
class CachingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit CachingEmbeddingProvider(const EmbeddingProvider& inner,
                                    std::optional<EmbeddingStore> store = std::nullopt);

  std::size_t dimension() const override { return inner_.dimension(); }
  const std::string& model_tag() const override { return inner_.model_tag(); }
  ProviderKind kind() const override { return inner_.kind(); }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override;

  /// Number of embed() calls forwarded to the wrapped provider.
  std::size_t inner_calls() const { return inner_calls_; }

 private:
  const EmbeddingProvider& inner_;
  std::optional<EmbeddingStore> store_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Embedding> memory_;
  mutable std::atomic<std::size_t> inner_calls_{0};
};

}  // namespace medrag
