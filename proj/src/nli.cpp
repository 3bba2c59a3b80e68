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

#include "medrag/nli.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <nlohmann/json.hpp>

#include "medrag/hashing.hpp"

namespace medrag {
namespace {

constexpr const char* kNliFormat = "medrag-nli/1";

NliProbs probs_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("ent") || !j.contains("neu") || !j.contains("con")) {
    throw ProtocolError("NLI result must have ent, neu and con");
  }
  NliProbs p{j["ent"].get<double>(), j["neu"].get<double>(), j["con"].get<double>()};
  validate_probs(p);
  return p;
}

}  // namespace

void validate_probs(const NliProbs& p) {
  for (double v : {p.ent, p.neu, p.con}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ProtocolError("NLI probability outside [0, 1]");
  }
  if (std::abs(p.ent + p.neu + p.con - 1.0) > 1e-4) {
    throw ProtocolError("NLI probabilities do not sum to 1");
  }
}

NliStore::NliStore(NliStore&& o) noexcept
    : dir_(std::move(o.dir_)), model_tag_(std::move(o.model_tag_)), entries_(std::move(o.entries_)) {}

NliStore& NliStore::operator=(NliStore&& o) noexcept {
  dir_ = std::move(o.dir_);
  model_tag_ = std::move(o.model_tag_);
  entries_ = std::move(o.entries_);
  return *this;
}

NliStore NliStore::open(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error("cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, (dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kNliFormat) {
    throw ParseError(0, (dir / "manifest.json").string() + ": unknown store format");
  }
  NliStore s;
  s.dir_ = dir;
  s.model_tag_ = manifest.at("model_tag").get<std::string>();
  std::ifstream in(dir / "probs.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      s.entries_.insert_or_assign(j.at("pair_hash").get<std::string>(), probs_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, (dir / "probs.jsonl").string() + ": " + e.what());
    }
  }
  return s;
}

NliStore NliStore::create(const std::filesystem::path& dir, const std::string& model_tag) {
  if (std::filesystem::exists(dir / "manifest.json")) {
    auto s = open(dir);
    if (s.model_tag_ != model_tag) {
      throw ConfigError("NLI store " + dir.string() + " holds " + s.model_tag_ + ", requested " + model_tag);
    }
    return s;
  }
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json m;
  m["format"] = kNliFormat;
  m["model_tag"] = model_tag;
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
  NliStore s;
  s.dir_ = dir;
  s.model_tag_ = model_tag;
  return s;
}

std::optional<NliProbs> NliStore::find(const std::string& hash) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void NliStore::put(const std::string& hash, const NliProbs& probs) {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(hash);
  if (it != entries_.end() && it->second == probs) return;
  entries_.insert_or_assign(hash, probs);
  std::ofstream out(dir_ / "probs.jsonl", std::ios::app);
  if (!out) throw Error("cannot write " + (dir_ / "probs.jsonl").string());
  nlohmann::ordered_json j;
  j["pair_hash"] = hash;
  j["ent"] = probs.ent;
  j["neu"] = probs.neu;
  j["con"] = probs.con;
  out << j.dump() << '\n';
}

void NliStore::compact() const {
  std::lock_guard lock(mu_);
  std::ofstream out(dir_ / "probs.jsonl", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir_ / "probs.jsonl").string());
  for (const auto& [hash, p] : entries_) {
    nlohmann::ordered_json j;
    j["pair_hash"] = hash;
    j["ent"] = p.ent;
    j["neu"] = p.neu;
    j["con"] = p.con;
    out << j.dump() << '\n';
  }
}

std::size_t NliStore::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<NliProbs> FileBackedNliProvider::score(const std::vector<NliPair>& pairs) const {
  std::vector<NliProbs> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto h = pair_hash(p.premise, p.hypothesis);
    auto r = store_.find(h);
    if (!r) throw LookupError("NLI store " + store_.dir().string() + " has no result for pair " + h);
    out.push_back(*r);
  }
  return out;
}

HttpNliProvider::HttpNliProvider(std::string base_url, std::string model_tag, std::size_t batch_size,
                                 RetryPolicy retry)
    : client_(std::move(base_url), std::move(retry)),
      model_tag_(std::move(model_tag)),
      batch_size_(std::max<std::size_t>(1, batch_size)) {}

std::vector<NliProbs> HttpNliProvider::score(const std::vector<NliPair>& pairs) const {
  std::vector<NliProbs> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); i += batch_size_) {
    const auto end = std::min(pairs.size(), i + batch_size_);
    nlohmann::json req;
    req["model"] = model_tag_;
    req["pairs"] = nlohmann::json::array();
    for (std::size_t k = i; k < end; ++k) {
      req["pairs"].push_back({{"premise", pairs[k].premise}, {"hypothesis", pairs[k].hypothesis}});
    }
    const auto res = client_.post_json("/nli", req);
    if (!res.contains("probs") || !res["probs"].is_array() || res["probs"].size() != end - i) {
      throw ProtocolError("/nli: expected " + std::to_string(end - i) + " results");
    }
    for (const auto& p : res["probs"]) out.push_back(probs_from_json(p));
  }
  return out;
}

CachingNliProvider::CachingNliProvider(const NliProvider& inner, NliStore* store)
    : inner_(inner), store_(store) {}

std::vector<NliProbs> CachingNliProvider::score(const std::vector<NliPair>& pairs) const {
  std::vector<std::string> hashes;
  hashes.reserve(pairs.size());
  for (const auto& p : pairs) hashes.push_back(pair_hash(p.premise, p.hypothesis));

  std::vector<NliPair> missing;
  std::vector<std::string> missing_hashes;
  {
    std::lock_guard lock(mu_);
    std::set<std::string> queued;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      if (memory_.count(hashes[i])) continue;
      if (store_) {
        if (auto r = store_->find(hashes[i])) {
          memory_.emplace(hashes[i], *r);
          continue;
        }
      }
      if (queued.insert(hashes[i]).second) {
        missing.push_back(pairs[i]);
        missing_hashes.push_back(hashes[i]);
      }
    }
  }
  if (!missing.empty()) {
    ++inner_calls_;
    const auto fresh = inner_.score(missing);
    if (fresh.size() != missing.size()) throw ProtocolError("NLI provider returned a short batch");
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      validate_probs(fresh[i]);
      if (store_) store_->put(missing_hashes[i], fresh[i]);
      memory_.insert_or_assign(missing_hashes[i], fresh[i]);
    }
  }
  std::vector<NliProbs> out;
  out.reserve(pairs.size());
  std::lock_guard lock(mu_);
  for (const auto& h : hashes) out.push_back(memory_.at(h));
  return out;
}

}  // namespace medrag
