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

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "medrag/embedding.hpp"
#include "medrag/http.hpp"

namespace medrag {

struct NliProbs {
  double ent = 0;
  double neu = 0;
  double con = 0;

  friend bool operator==(const NliProbs&, const NliProbs&) = default;
};

struct NliPair {
  std::string premise;
  std::string hypothesis;
};

/// Each probability in [0, 1] and the three summing to 1 within 1e-4.
/// Throws ProtocolError otherwise.
void validate_probs(const NliProbs& p);

class NliProvider {
 public:
  virtual ~NliProvider() = default;
  virtual const std::string& model_tag() const = 0;
  virtual ProviderKind kind() const = 0;
  /// One result per pair, in order.
  virtual std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const = 0;
};

/// On-disk NLI results:
///
///   <dir>/manifest.json  {"format", "model_tag"}
///   <dir>/probs.jsonl    {"pair_hash", "ent", "neu", "con"} per line
///
/// keyed by pair_hash(premise, hypothesis).
class NliStore {
 public:
  NliStore() = default;
  NliStore(NliStore&& o) noexcept;
  NliStore& operator=(NliStore&& o) noexcept;

  static NliStore open(const std::filesystem::path& dir);
  static NliStore create(const std::filesystem::path& dir, const std::string& model_tag);

  std::optional<NliProbs> find(const std::string& hash) const;
  /// Appends to probs.jsonl. Safe to call from several threads.
  void put(const std::string& hash, const NliProbs& probs);
  /// Rewrites probs.jsonl sorted by hash.
  void compact() const;

  const std::string& model_tag() const { return model_tag_; }
  const std::filesystem::path& dir() const { return dir_; }
  std::size_t size() const;

 private:
  std::filesystem::path dir_;
  std::string model_tag_;
  std::map<std::string, NliProbs> entries_;
  mutable std::mutex mu_;
};

class FileBackedNliProvider final : public NliProvider {
 public:
  explicit FileBackedNliProvider(NliStore store) : store_(std::move(store)) {}

  const std::string& model_tag() const override { return store_.model_tag(); }
  ProviderKind kind() const override { return ProviderKind::FileBacked; }
  /// Throws LookupError naming the pair hash of the first unknown pair.
  std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const override;

 private:
  NliStore store_;
};

/// Client of POST /nli: {"model", "pairs": [{"premise", "hypothesis"}]} ->
/// {"probs": [{"ent", "neu", "con"}]}.
class HttpNliProvider final : public NliProvider {
 public:
  HttpNliProvider(std::string base_url, std::string model_tag, std::size_t batch_size = 32,
                  RetryPolicy retry = {});

  const std::string& model_tag() const override { return model_tag_; }
  ProviderKind kind() const override { return ProviderKind::HttpService; }
  std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const override;

 private:
  HttpClient client_;
  std::string model_tag_;
  std::size_t batch_size_;
};

/// Memoises another provider by pair hash, optionally persisting to a store.
class CachingNliProvider final : public NliProvider {
 public:
  explicit CachingNliProvider(const NliProvider& inner, NliStore* store = nullptr);

  const std::string& model_tag() const override { return inner_.model_tag(); }
  ProviderKind kind() const override { return inner_.kind(); }
  std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const override;

  std::size_t inner_calls() const { return inner_calls_; }

 private:
  const NliProvider& inner_;
  NliStore* store_;
  mutable std::mutex mu_;
  mutable std::map<std::string, NliProbs> memory_;
  mutable std::atomic<std::size_t> inner_calls_{0};
};

}  // namespace medrag
