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

#include "medrag/embedding.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <nlohmann/json.hpp>

#include "medrag/hashing.hpp"

namespace medrag {
namespace {

constexpr const char* kStoreFormat = "medrag-embeddings/1";

static_assert(std::endian::native == std::endian::little,
              "embedding stores are little-endian; add byte swapping for this target");

nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, p.string() + ": " + e.what());
  }
}

}  // namespace

std::string text_hash(std::string_view text) { return sha256_hex(text); }

std::vector<Embedding> embed_batch(const EmbeddingProvider& provider,
                                   const std::vector<std::string>& texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw DomainError("embed_batch: empty text");
  }
  auto out = provider.embed(texts);
  if (out.size() != texts.size()) {
    throw ProtocolError("embedding provider returned " + std::to_string(out.size()) +
                        " vectors for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& e : out) {
    if (static_cast<std::size_t>(e.dimension()) != provider.dimension()) {
      throw ProtocolError("embedding provider returned dimension " + std::to_string(e.dimension()) +
                          ", expected " + std::to_string(provider.dimension()));
    }
  }
  return out;
}

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != kStoreFormat) {
    throw ParseError(0, (dir / "manifest.json").string() + ": unknown store format");
  }
  EmbeddingStore s;
  s.dir_ = dir;
  s.dimension_ = manifest.at("dimension").get<std::size_t>();
  s.model_tag_ = manifest.at("model_tag").get<std::string>();
  return s;
}

EmbeddingStore EmbeddingStore::create(const std::filesystem::path& dir, std::size_t dimension,
                                      const std::string& model_tag) {
  if (std::filesystem::exists(dir / "manifest.json")) {
    auto s = open(dir);
    if (s.dimension_ != dimension || s.model_tag_ != model_tag) {
      throw ConfigError("embedding store " + dir.string() + " holds " + s.model_tag_ + "/" +
                        std::to_string(s.dimension_) + ", requested " + model_tag + "/" +
                        std::to_string(dimension));
    }
    return s;
  }
  std::filesystem::create_directories(dir / "vectors");
  nlohmann::ordered_json m;
  m["format"] = kStoreFormat;
  m["dimension"] = dimension;
  m["model_tag"] = model_tag;
  m["dtype"] = "float64";
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
  EmbeddingStore s;
  s.dir_ = dir;
  s.dimension_ = dimension;
  s.model_tag_ = model_tag;
  return s;
}

std::filesystem::path EmbeddingStore::path_for(const std::string& hash) const {
  return dir_ / "vectors" / hash.substr(0, 2) / (hash + ".bin");
}

std::optional<Embedding> EmbeddingStore::find(std::string_view text) const {
  return find_hash(text_hash(text));
}

std::optional<Embedding> EmbeddingStore::find_hash(const std::string& hash) const {
  std::ifstream in(path_for(hash), std::ios::binary);
  if (!in) return std::nullopt;
  Embedding::Vector v(static_cast<Eigen::Index>(dimension_));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dimension_ * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(dimension_ * sizeof(double))) {
    throw ParseError(0, "truncated embedding file " + path_for(hash).string());
  }
  return Embedding(std::move(v));
}

void EmbeddingStore::put(std::string_view text, const Embedding& embedding) const {
  if (static_cast<std::size_t>(embedding.dimension()) != dimension_) {
    throw DomainError("embedding store " + dir_.string() + ": dimension mismatch");
  }
  const auto path = path_for(text_hash(text));
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(embedding.values().data()),
              static_cast<std::streamsize>(dimension_ * sizeof(double)));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<Embedding> FileBackedEmbeddingProvider::embed(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const auto hash = text_hash(t);
    auto e = store_.find_hash(hash);
    if (!e) {
      throw LookupError("embedding store " + store_.dir().string() + " has no vector for text " + hash);
    }
    out.push_back(std::move(*e));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::string model_tag,
                                             std::size_t dimension, std::size_t batch_size,
                                             RetryPolicy retry)
    : client_(std::move(base_url), std::move(retry)),
      model_tag_(std::move(model_tag)),
      dimension_(dimension),
      batch_size_(std::max<std::size_t>(1, batch_size)) {}

std::vector<Embedding> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); i += batch_size_) {
    const auto end = std::min(texts.size(), i + batch_size_);
    nlohmann::json req;
    req["model"] = model_tag_;
    req["texts"] = std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                            texts.begin() + static_cast<std::ptrdiff_t>(end));
    const auto res = client_.post_json("/embed", req);
    if (!res.contains("vectors") || !res["vectors"].is_array() || res["vectors"].size() != end - i) {
      throw ProtocolError("/embed: expected " + std::to_string(end - i) + " vectors");
    }
    for (const auto& row : res["vectors"]) {
      if (!row.is_array() || row.size() != dimension_) {
        throw ProtocolError("/embed: vector of dimension " + std::to_string(row.size()) +
                            ", expected " + std::to_string(dimension_));
      }
      Embedding::Vector v(static_cast<Eigen::Index>(dimension_));
      for (std::size_t k = 0; k < dimension_; ++k) v(static_cast<Eigen::Index>(k)) = row[k].get<double>();
      out.emplace_back(std::move(v));
    }
  }
  return out;
}

CachingEmbeddingProvider::CachingEmbeddingProvider(const EmbeddingProvider& inner,
                                                   std::optional<EmbeddingStore> store)
    : inner_(inner), store_(std::move(store)) {
  if (store_ && store_->dimension() != inner_.dimension()) {
    throw ConfigError("embedding cache " + store_->dir().string() + " dimension mismatch");
  }
}

std::vector<Embedding> CachingEmbeddingProvider::embed(const std::vector<std::string>& texts) const {
  std::vector<std::string> hashes;
  hashes.reserve(texts.size());
  for (const auto& t : texts) hashes.push_back(text_hash(t));

  std::vector<std::string> missing;
  std::set<std::string> missing_hashes;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (memory_.count(hashes[i])) continue;
      if (store_) {
        if (auto e = store_->find_hash(hashes[i])) {
          memory_.emplace(hashes[i], std::move(*e));
          continue;
        }
      }
      if (missing_hashes.insert(hashes[i]).second) missing.push_back(texts[i]);
    }
  }
  if (!missing.empty()) {
    ++inner_calls_;
    auto fresh = embed_batch(inner_, missing);
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (store_) store_->put(missing[i], fresh[i]);
      memory_.insert_or_assign(text_hash(missing[i]), std::move(fresh[i]));
    }
  }
  std::vector<Embedding> out;
  out.reserve(texts.size());
  std::lock_guard lock(mu_);
  for (const auto& h : hashes) out.push_back(memory_.at(h));
  return out;
}

}  // namespace medrag
