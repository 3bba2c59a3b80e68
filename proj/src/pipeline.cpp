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

#include "medrag/pipeline.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>
#include <nlohmann/json.hpp>

#include "medrag/analysis.hpp"
#include "medrag/csv.hpp"
#include "medrag/evaluation.hpp"
#include "medrag/hashing.hpp"
#include "medrag/pos_tagger.hpp"
#include "medrag/pubmed.hpp"
#include "medrag/text.hpp"
#include "medrag/vector_index.hpp"

namespace medrag {
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Strict reader: every key it is asked about is consumed, leftovers are errors.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() = default;

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }
  void get(const char* key, std::optional<double>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    if (!j_.at(key).is_number()) throw ConfigError(path_ + "." + key + " has the wrong type");
    out = j_.at(key).get<double>();
  }
  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), path_ + "." + key);
  }
  const nlohmann::json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + path_ + "." + k);
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_provider(Section& s, ProviderConfig& p) {
  s.get("provider", p.provider);
  s.get("store", p.store);
  s.get("url", p.url);
  s.get("model_tag", p.model_tag);
  s.get("dimension", p.dimension);
  s.get("batch_size", p.batch_size);
  s.finish();
}

ojson render_provider(const ProviderConfig& p) {
  ojson j;
  j["provider"] = p.provider;
  j["store"] = p.store;
  j["url"] = p.url;
  j["model_tag"] = p.model_tag;
  j["dimension"] = p.dimension;
  j["batch_size"] = p.batch_size;
  return j;
}

ojson render_sections(const PipelineConfig& c) {
  ojson j;
  j["paths"] = {{"queries", c.paths.queries},
                {"raw_corpus", c.paths.raw_corpus},
                {"work_dir", c.paths.work_dir},
                {"cache_dir", c.paths.cache_dir}};
  j["ingest"] = {{"eutils_url", c.ingest.eutils_url}, {"icite_url", c.ingest.icite_url},
                 {"exclusions", c.ingest.exclusions}, {"batch_size", c.ingest.batch_size},
                 {"retmax", c.ingest.retmax},         {"max_in_flight", c.ingest.max_in_flight}};
  j["selection"] = {{"cap", c.selection.cap}, {"year_target", c.selection.year_target},
                    {"year_gap", c.selection.year_gap}};
  ojson emb;
  emb["retrieval"] = render_provider(c.embedding.retrieval);
  emb["scientific"] = render_provider(c.embedding.scientific);
  emb["index"] = c.embedding.index;
  emb["neighbors"] = c.embedding.neighbors;
  j["embedding"] = emb;
  j["ranking"] = {{"lambda", c.ranking.lambda},
                  {"alpha", c.ranking.alpha},
                  {"epsilon", c.ranking.epsilon},
                  {"k", c.ranking.k}};
  ojson con;
  con["theta"] = c.contradiction.theta;
  con["abs_sim_gate"] = c.contradiction.abs_sim_gate ? ojson(*c.contradiction.abs_sim_gate) : ojson(nullptr);
  con["workers"] = c.contradiction.workers;
  con["nli"] = render_provider(c.contradiction.nli);
  j["contradiction"] = con;
  ojson gen;
  gen["conditions"] = ojson::array();
  for (auto cond : c.generation.conditions) gen["conditions"].push_back(std::string(condition_code(cond)));
  gen["models"] = ojson::array();
  for (const auto& m : c.generation.models) {
    gen["models"].push_back(
        {{"model_tag", m.model_tag}, {"provider", m.provider}, {"replay_file", m.replay_file}, {"url", m.url}});
  }
  gen["prompt_template"] = c.generation.prompt_template;
  gen["max_tokens"] = c.generation.max_tokens;
  gen["workers"] = c.generation.workers;
  j["generation"] = gen;
  j["evaluation"] = {{"word_vectors", render_provider(c.evaluation.word_vectors)},
                     {"workers", c.evaluation.workers}};
  j["analysis"] = {{"anchor", c.analysis.anchor}, {"last_year", c.analysis.last_year},
                   {"width", c.analysis.width},   {"table3", c.analysis.table3},
                   {"fig2", c.analysis.fig2},     {"png", c.analysis.png}};
  return j;
}

// Provider settings that change results; store locations and URLs do not.
ojson provider_identity(const ProviderConfig& p) {
  return {{"model_tag", p.model_tag}, {"dimension", p.dimension}};
}

void write_text(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  if (!out) throw Error("cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reset_dir(const fs::path& p) {
  fs::remove_all(p);
  fs::create_directories(p);
}

}  // namespace

RankingParams PipelineConfig::ranking_params() const {
  return {ranking.lambda, ranking.alpha, ranking.epsilon, ranking.k};
}

SelectionParams PipelineConfig::selection_params() const {
  return {selection.cap, selection.year_target, selection.year_gap};
}

ContradictionParams PipelineConfig::contradiction_params() const {
  return {contradiction.theta, contradiction.abs_sim_gate, contradiction.workers};
}

void PipelineConfig::validate() const {
  ranking_params().validate();
  if (selection.cap < 1 || selection.cap > kMaxSelectedPool) {
    throw ConfigError("selection.cap must lie in [1, " + std::to_string(kMaxSelectedPool) + "]");
  }
  if (selection.year_target < 1) throw ConfigError("selection.year_target must be at least 1");
  if (selection.year_gap < 1) throw ConfigError("selection.year_gap must be at least 1");
  if (ingest.batch_size < 1 || ingest.batch_size > kMaxFetchBatch) {
    throw ConfigError("ingest.batch_size must lie in [1, " + std::to_string(kMaxFetchBatch) + "]");
  }
  if (!(contradiction.theta >= -1 && contradiction.theta <= 1)) {
    throw ConfigError("contradiction.theta must lie in [-1, 1]");
  }
  for (const auto* p : {&embedding.retrieval, &embedding.scientific, &contradiction.nli, &evaluation.word_vectors}) {
    if (p->provider != "file" && p->provider != "http") {
      throw ConfigError("provider must be \"file\" or \"http\", got \"" + p->provider + "\"");
    }
    if (p->provider == "http" && p->url.empty()) throw ConfigError("http provider " + p->model_tag + " needs a url");
  }
  if (embedding.retrieval.dimension < 1 || embedding.scientific.dimension < 1) {
    throw ConfigError("embedding dimension must be positive");
  }
  if (embedding.index != "exact" && embedding.index != "hnsw") {
    throw ConfigError("embedding.index must be \"exact\" or \"hnsw\"");
  }
  if (generation.conditions.empty()) throw ConfigError("generation.conditions is empty");
  if (generation.max_tokens < 1 || generation.max_tokens > kMaxTokens) {
    throw ConfigError("generation.max_tokens must lie in [1, " + std::to_string(kMaxTokens) + "]");
  }
  std::set<std::string> tags;
  for (const auto& m : generation.models) {
    if (m.model_tag.empty()) throw ConfigError("generation model without model_tag");
    if (!tags.insert(m.model_tag).second) throw ConfigError("duplicate model " + m.model_tag);
    if (m.provider == "replay" ? m.replay_file.empty() : m.provider == "http" ? m.url.empty() : true) {
      throw ConfigError("model " + m.model_tag + " needs provider \"replay\" with replay_file or \"http\" with url");
    }
  }
  if (analysis.width < 1 || analysis.last_year < analysis.anchor) {
    throw ConfigError("analysis intervals are malformed");
  }
}

fs::path PipelineConfig::resolve(const std::string& p) const {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

PipelineConfig parse_config(std::string_view json_text, fs::path base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  c.base_dir = std::move(base_dir);
  Section root(j, "config");
  if (auto s = root.sub("paths")) {
    s->get("queries", c.paths.queries);
    s->get("raw_corpus", c.paths.raw_corpus);
    s->get("work_dir", c.paths.work_dir);
    s->get("cache_dir", c.paths.cache_dir);
    s->finish();
  }
  if (auto s = root.sub("ingest")) {
    s->get("eutils_url", c.ingest.eutils_url);
    s->get("icite_url", c.ingest.icite_url);
    s->get("exclusions", c.ingest.exclusions);
    s->get("batch_size", c.ingest.batch_size);
    s->get("retmax", c.ingest.retmax);
    s->get("max_in_flight", c.ingest.max_in_flight);
    s->finish();
  }
  if (auto s = root.sub("selection")) {
    s->get("cap", c.selection.cap);
    s->get("year_target", c.selection.year_target);
    s->get("year_gap", c.selection.year_gap);
    s->finish();
  }
  if (auto s = root.sub("embedding")) {
    if (auto p = s->sub("retrieval")) read_provider(*p, c.embedding.retrieval);
    if (auto p = s->sub("scientific")) read_provider(*p, c.embedding.scientific);
    s->get("index", c.embedding.index);
    s->get("neighbors", c.embedding.neighbors);
    s->finish();
  }
  if (auto s = root.sub("ranking")) {
    s->get("lambda", c.ranking.lambda);
    s->get("alpha", c.ranking.alpha);
    s->get("epsilon", c.ranking.epsilon);
    s->get("k", c.ranking.k);
    s->finish();
  }
  if (auto s = root.sub("contradiction")) {
    s->get("theta", c.contradiction.theta);
    s->get("abs_sim_gate", c.contradiction.abs_sim_gate);
    s->get("workers", c.contradiction.workers);
    if (auto p = s->sub("nli")) read_provider(*p, c.contradiction.nli);
    s->finish();
  }
  if (auto s = root.sub("generation")) {
    std::vector<std::string> conds;
    bool have_conds = s->raw("conditions") != nullptr;
    s->get("conditions", conds);
    if (have_conds) {
      c.generation.conditions.clear();
      for (const auto& x : conds) c.generation.conditions.push_back(parse_condition(x));
    }
    if (const auto* models = s->raw("models")) {
      if (!models->is_array()) throw ConfigError("config.generation.models must be an array");
      for (std::size_t i = 0; i < models->size(); ++i) {
        Section ms((*models)[i], "config.generation.models[" + std::to_string(i) + "]");
        ModelConfig m;
        ms.get("model_tag", m.model_tag);
        ms.get("provider", m.provider);
        ms.get("replay_file", m.replay_file);
        ms.get("url", m.url);
        ms.finish();
        c.generation.models.push_back(m);
      }
    }
    s->get("prompt_template", c.generation.prompt_template);
    s->get("max_tokens", c.generation.max_tokens);
    s->get("workers", c.generation.workers);
    s->finish();
  }
  if (auto s = root.sub("evaluation")) {
    if (auto p = s->sub("word_vectors")) read_provider(*p, c.evaluation.word_vectors);
    s->get("workers", c.evaluation.workers);
    s->finish();
  }
  if (auto s = root.sub("analysis")) {
    s->get("anchor", c.analysis.anchor);
    s->get("last_year", c.analysis.last_year);
    s->get("width", c.analysis.width);
    s->get("table3", c.analysis.table3);
    s->get("fig2", c.analysis.fig2);
    s->get("png", c.analysis.png);
    s->finish();
  }
  root.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fs::absolute(path).parent_path());
}

std::string render_config(const PipelineConfig& config) { return render_sections(config).dump(2) + "\n"; }

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::Select: return "select";
    case Stage::Embed: return "embed";
    case Stage::Rank: return "rank";
    case Stage::Contradict: return "contradict";
    case Stage::Generate: return "generate";
    case Stage::Evaluate: return "evaluate";
    case Stage::Analyze: return "analyze";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::Ingest:
    case Stage::Select: return {};
    case Stage::Embed: return {Stage::Select};
    case Stage::Rank:
    case Stage::Contradict: return {Stage::Embed};
    case Stage::Generate:
    case Stage::Analyze: return {Stage::Rank, Stage::Contradict};
    case Stage::Evaluate: return {Stage::Generate};
  }
  return {};
}

std::string artifact_name(std::string_view query_ref) {
  std::string out(query_ref);
  for (auto& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return out;
}

std::string content_hash(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), path).generic_string(), e.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, p] : files) listing += rel + '\0' + sha256_file(p) + '\n';
  return sha256_hex(listing);
}

std::unique_ptr<EmbeddingProvider> ProviderFactory::embedding(const ProviderConfig& c,
                                                              const PipelineConfig& cfg) const {
  if (c.provider == "file") {
    auto store = EmbeddingStore::open(cfg.resolve(c.store));
    if (store.dimension() != c.dimension || store.model_tag() != c.model_tag) {
      throw ConfigError("embedding store " + c.store + " holds " + store.model_tag() + "/" +
                        std::to_string(store.dimension()) + ", config expects " + c.model_tag + "/" +
                        std::to_string(c.dimension));
    }
    return std::make_unique<FileBackedEmbeddingProvider>(std::move(store));
  }
  // An http provider is always read through an on-disk cache so reruns need no server.
  struct CachedHttp final : EmbeddingProvider {
    HttpEmbeddingProvider http;
    CachingEmbeddingProvider cache;
    CachedHttp(const ProviderConfig& c, EmbeddingStore store)
        : http(c.url, c.model_tag, c.dimension, c.batch_size), cache(http, std::move(store)) {}
    std::size_t dimension() const override { return http.dimension(); }
    const std::string& model_tag() const override { return http.model_tag(); }
    ProviderKind kind() const override { return ProviderKind::HttpService; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) const override { return cache.embed(texts); }
  };
  auto store = EmbeddingStore::create(cfg.resolve(cfg.paths.cache_dir) / "embeddings" / artifact_name(c.model_tag),
                                      c.dimension, c.model_tag);
  return std::make_unique<CachedHttp>(c, std::move(store));
}

std::unique_ptr<NliProvider> ProviderFactory::nli(const ProviderConfig& c, const PipelineConfig& cfg) const {
  if (c.provider == "file") {
    auto store = NliStore::open(cfg.resolve(c.store));
    if (store.model_tag() != c.model_tag) {
      throw ConfigError("NLI store " + c.store + " holds " + store.model_tag() + ", config expects " + c.model_tag);
    }
    return std::make_unique<FileBackedNliProvider>(std::move(store));
  }
  struct CachedHttp final : NliProvider {
    HttpNliProvider http;
    NliStore store;
    CachingNliProvider cache;
    CachedHttp(const ProviderConfig& c, NliStore s)
        : http(c.url, c.model_tag, c.batch_size), store(std::move(s)), cache(http, &store) {}
    const std::string& model_tag() const override { return http.model_tag(); }
    ProviderKind kind() const override { return ProviderKind::HttpService; }
    std::vector<NliProbs> score(const std::vector<NliPair>& pairs) const override { return cache.score(pairs); }
  };
  auto store = NliStore::create(cfg.resolve(cfg.paths.cache_dir) / "nli" / artifact_name(c.model_tag), c.model_tag);
  return std::make_unique<CachedHttp>(c, std::move(store));
}

std::unique_ptr<GenerationProvider> ProviderFactory::generation(const ModelConfig& m, const PipelineConfig& cfg) const {
  if (m.provider == "replay") return std::make_unique<ReplayGenerationProvider>(cfg.resolve(m.replay_file), m.model_tag);
  return std::make_unique<HttpGenerationProvider>(m.url, m.model_tag, cfg.generation.max_tokens);
}

std::unique_ptr<WordVectorProvider> ProviderFactory::word_vectors(const ProviderConfig& c,
                                                                  const PipelineConfig& cfg) const {
  if (c.provider == "file") {
    auto wv = std::make_unique<FileBackedWordVectors>(cfg.resolve(c.store));
    if (wv->dimension() != c.dimension) {
      throw ConfigError("word vectors " + c.store + " have dimension " + std::to_string(wv->dimension()) +
                        ", config expects " + std::to_string(c.dimension));
    }
    return wv;
  }
  return std::make_unique<HttpWordVectors>(c.url, c.model_tag, c.dimension);
}

Pipeline::Pipeline(PipelineConfig config, std::ostream& log, std::shared_ptr<const ProviderFactory> factory)
    : config_(std::move(config)), log_(log), factory_(std::move(factory)) {
  config_.validate();
  if (!factory_) factory_ = std::make_shared<ProviderFactory>();
}

std::string Pipeline::config_hash(Stage stage) const {
  const auto all = render_sections(config_);
  ojson j;
  j["stage"] = stage_name(stage);
  switch (stage) {
    case Stage::Ingest:
      j["section"] = {{"batch_size", config_.ingest.batch_size},
                      {"retmax", config_.ingest.retmax},
                      {"exclusions", config_.ingest.exclusions}};
      break;
    case Stage::Select: j["section"] = all["selection"]; break;
    case Stage::Embed:
      j["section"] = {{"retrieval", provider_identity(config_.embedding.retrieval)},
                      {"scientific", provider_identity(config_.embedding.scientific)},
                      {"index", config_.embedding.index},
                      {"neighbors", config_.embedding.neighbors}};
      break;
    case Stage::Rank: j["section"] = all["ranking"]; break;
    case Stage::Contradict:
      j["section"] = {{"theta", config_.contradiction.theta},
                      {"abs_sim_gate", all["contradiction"]["abs_sim_gate"]},
                      {"nli", provider_identity(config_.contradiction.nli)}};
      break;
    case Stage::Generate: {
      auto g = all["generation"];
      g.erase("workers");
      for (auto& m : g["models"]) {
        m.erase("url");
        m.erase("replay_file");
      }
      if (!config_.generation.prompt_template.empty()) {
        g["prompt_template"] = sha256_hex(read_text(config_.resolve(config_.generation.prompt_template)));
      }
      j["section"] = g;
      break;
    }
    case Stage::Evaluate:
      j["section"] = {{"encoder", provider_identity(config_.embedding.retrieval)},
                      {"word_vectors", provider_identity(config_.evaluation.word_vectors)}};
      break;
    case Stage::Analyze: {
      auto a = all["analysis"];
      j["section"] = a;
      break;
    }
  }
  j["upstream"] = ojson::array();
  for (auto u : upstream_of(stage)) j["upstream"].push_back(config_hash(u));
  return sha256_hex(j.dump());
}

fs::path Pipeline::stage_dir(Stage stage) const {
  return config_.resolve(config_.paths.work_dir) / std::string(stage_name(stage));
}

std::optional<StageManifest> Pipeline::manifest(Stage stage) const {
  const auto p = stage_dir(stage) / "manifest.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    const auto j = nlohmann::json::parse(read_text(p));
    StageManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw UpstreamError(p.string() + " is corrupt: " + e.what());
  }
}

void Pipeline::check_upstream(Stage stage) const {
  const auto work = config_.resolve(config_.paths.work_dir);
  for (auto u : upstream_of(stage)) {
    const auto name = std::string(stage_name(u));
    const auto m = manifest(u);
    if (!m) throw UpstreamError(name + " artifacts missing; run `medrag " + name + "` first");
    if (m->config_hash != config_hash(u)) {
      throw UpstreamError(name + " artifacts were built with a different configuration; rerun `medrag " + name + "`");
    }
    for (const auto& [rel, hash] : m->outputs) {
      const auto p = work / rel;
      if (!fs::exists(p) || content_hash(p) != hash) {
        throw UpstreamError(name + " artifact " + rel + " is missing or was modified; rerun `medrag " + name + "`");
      }
    }
  }
  if (stage == Stage::Select && !fs::exists(config_.resolve(config_.paths.raw_corpus))) {
    throw UpstreamError("ingest artifacts missing: no raw corpus at " + config_.paths.raw_corpus);
  }
  if (stage == Stage::Ingest && config_.paths.queries.empty()) {
    throw ConfigError("paths.queries is not set");
  }
}

Pipeline::Files Pipeline::stage_inputs(Stage stage) const {
  Files in;
  const auto work = config_.resolve(config_.paths.work_dir);
  switch (stage) {
    case Stage::Ingest: in["queries"] = config_.resolve(config_.paths.queries); break;
    case Stage::Select: in["raw_corpus"] = config_.resolve(config_.paths.raw_corpus); break;
    default: break;
  }
  for (auto u : upstream_of(stage)) {
    if (const auto m = manifest(u)) {
      for (const auto& [rel, hash] : m->outputs) in[rel] = work / rel;
    }
  }
  const auto add_store = [&](const char* key, const ProviderConfig& p, const char* file) {
    if (p.provider == "file") in[key] = config_.resolve(p.store) / file;
  };
  if (stage == Stage::Embed) {
    add_store("store:retrieval", config_.embedding.retrieval, "manifest.json");
    add_store("store:scientific", config_.embedding.scientific, "manifest.json");
  }
  if (stage == Stage::Contradict) add_store("store:nli", config_.contradiction.nli, "probs.jsonl");
  if (stage == Stage::Generate) {
    for (const auto& m : config_.generation.models) {
      if (m.provider == "replay") in["replay:" + m.model_tag] = config_.resolve(m.replay_file);
    }
  }
  if (stage == Stage::Evaluate) {
    add_store("store:retrieval", config_.embedding.retrieval, "manifest.json");
    if (config_.evaluation.word_vectors.provider == "file") {
      in["word_vectors"] = config_.resolve(config_.evaluation.word_vectors.store);
    }
  }
  return in;
}

bool Pipeline::up_to_date(Stage stage, const Files& inputs) const {
  const auto m = manifest(stage);
  if (!m || m->config_hash != config_hash(stage)) return false;
  if (m->inputs.size() != inputs.size()) return false;
  for (const auto& [key, path] : inputs) {
    const auto it = m->inputs.find(key);
    if (it == m->inputs.end() || !fs::exists(path) || content_hash(path) != it->second) return false;
  }
  const auto work = config_.resolve(config_.paths.work_dir);
  for (const auto& [rel, hash] : m->outputs) {
    const auto p = work / rel;
    if (!fs::exists(p) || content_hash(p) != hash) return false;
  }
  return true;
}

void Pipeline::write_manifest(Stage stage, const Files& inputs) const {
  const auto dir = stage_dir(stage);
  const auto work = config_.resolve(config_.paths.work_dir);
  ojson j;
  j["stage"] = stage_name(stage);
  j["config_hash"] = config_hash(stage);
  j["inputs"] = ojson::object();
  for (const auto& [key, path] : inputs) {
    if (fs::exists(path)) j["inputs"][key] = content_hash(path);
  }
  j["outputs"] = ojson::object();
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename() != "manifest.json") entries.push_back(e.path());
  }
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) j["outputs"][fs::relative(p, work).generic_string()] = content_hash(p);
  write_text(dir / "manifest.json", j.dump(2) + "\n");
}

StageOutcome Pipeline::run(Stage stage, const StageFlags& flags) {
  check_upstream(stage);
  const auto inputs = stage_inputs(stage);
  StageOutcome out{stage, false, 0};
  if (!flags.force && !(stage == Stage::Generate && flags.resume) && up_to_date(stage, inputs)) {
    log_ << stage_name(stage) << ": up to date, skipped\n";
    out.skipped = true;
    return out;
  }
  fs::remove(stage_dir(stage) / "manifest.json");
  switch (stage) {
    case Stage::Ingest: out.failures = run_ingest(); break;
    case Stage::Select: out.failures = run_select(); break;
    case Stage::Embed: out.failures = run_embed(); break;
    case Stage::Rank: out.failures = run_rank(); break;
    case Stage::Contradict: out.failures = run_contradict(); break;
    case Stage::Generate: out.failures = run_generate(flags.resume); break;
    case Stage::Evaluate: out.failures = run_evaluate(); break;
    case Stage::Analyze: out.failures = run_analyze(); break;
  }
  write_manifest(stage, inputs);
  return out;
}

std::vector<StageOutcome> Pipeline::run_all(const StageFlags& flags) {
  std::vector<StageOutcome> out;
  for (auto s : kAllStages) {
    if (s == Stage::Ingest) continue;
    out.push_back(run(s, flags));
  }
  return out;
}

Corpus Pipeline::selected_corpus() const { return load_corpus(stage_dir(Stage::Select) / "corpus.jsonl"); }

std::size_t Pipeline::run_ingest() {
  const auto queries = load_corpus(config_.resolve(config_.paths.queries));
  std::map<std::string, std::string> references;
  for (const auto& q : queries.queries) references[q.id()] = q.reference_answer;
  PubMedConfig pc;
  pc.eutils_base = config_.ingest.eutils_url;
  pc.icite_base = config_.ingest.icite_url;
  pc.batch_size = config_.ingest.batch_size;
  pc.retmax = config_.ingest.retmax;
  pc.max_in_flight = config_.ingest.max_in_flight;
  pc.cache_dir = config_.resolve(config_.paths.cache_dir) / "pubmed";
  PubMedClient client(pc);
  IngestOptions opts;
  opts.exclusions = load_exclusion_list(config_.ingest.exclusions.empty()
                                            ? fs::path(MEDRAG_DATA_DIR) / "exclusions" / "pharma_companies_v1.txt"
                                            : config_.resolve(config_.ingest.exclusions));
  opts.log = &log_;
  const auto corpus = ingest_corpus(queries.medicines, references, client, opts);
  reset_dir(stage_dir(Stage::Ingest));
  save_corpus(corpus, config_.resolve(config_.paths.raw_corpus));
  std::ostringstream summary;
  csv::write_row(summary, {"query_ref", "documents"});
  for (const auto& [ref, pool] : corpus.pools) csv::write_row(summary, {ref, std::to_string(pool.documents.size())});
  write_text(stage_dir(Stage::Ingest) / "pools.csv", summary.str());
  log_ << "ingest: " << corpus.queries.size() << " queries, " << corpus.document_count() << " documents, "
       << client.efetch_requests() << " efetch requests\n";
  return 0;
}

std::size_t Pipeline::run_select() {
  const auto raw = load_corpus(config_.resolve(config_.paths.raw_corpus));
  raw.validate();
  const auto selected = select_corpus(raw, config_.selection_params());
  const auto dir = stage_dir(Stage::Select);
  reset_dir(dir);
  save_corpus(selected, dir / "corpus.jsonl");
  std::ostringstream years;
  csv::write_row(years, {"query_ref", "year", "documents"});
  for (const auto& [ref, pool] : selected.pools) {
    for (const auto& [y, n] : year_histogram(pool)) csv::write_row(years, {ref, std::to_string(y), std::to_string(n)});
  }
  write_text(dir / "years.csv", years.str());
  log_ << "select: " << selected.pools.size() << " pools, " << raw.document_count() << " -> "
       << selected.document_count() << " documents\n";
  return 0;
}

std::size_t Pipeline::run_embed() {
  const auto corpus = selected_corpus();
  const auto dir = stage_dir(Stage::Embed);
  reset_dir(dir);
  const auto retrieval = factory_->embedding(config_.embedding.retrieval, config_);
  const auto scientific = factory_->embedding(config_.embedding.scientific, config_);
  const auto rstore = EmbeddingStore::create(dir / "retrieval", retrieval->dimension(), retrieval->model_tag());
  const auto sstore = EmbeddingStore::create(dir / "scientific", scientific->dimension(), scientific->model_tag());

  std::vector<std::string> rtexts, stexts;
  std::set<std::string> rseen, sseen;
  std::vector<csv::Row> listing;
  const auto want = [&](std::vector<std::string>& texts, std::set<std::string>& seen, const std::string& t) {
    if (seen.insert(t).second) texts.push_back(t);
  };
  for (const auto& q : corpus.queries) {
    const auto& pool = corpus.pool(q.id());
    if (pool.documents.empty()) continue;
    want(rtexts, rseen, q.text);
    listing.push_back({"retrieval", "query", q.id(), text_hash(q.text)});
    for (const auto& d : pool.documents) {
      want(rtexts, rseen, d.text);
      want(stexts, sseen, d.text);
      listing.push_back({"retrieval", "abstract", d.pmid, text_hash(d.text)});
      listing.push_back({"scientific", "abstract", d.pmid, text_hash(d.text)});
      for (std::size_t i = 0; i < d.sentences.size(); ++i) {
        if (trim(d.sentences[i]).empty()) continue;
        want(stexts, sseen, d.sentences[i]);
        listing.push_back({"scientific", "sentence", d.pmid + "#" + std::to_string(i), text_hash(d.sentences[i])});
      }
    }
  }
  const auto rvecs = rtexts.empty() ? std::vector<Embedding>{} : embed_batch(*retrieval, rtexts);
  for (std::size_t i = 0; i < rtexts.size(); ++i) rstore.put(rtexts[i], rvecs[i]);
  const auto svecs = stexts.empty() ? std::vector<Embedding>{} : embed_batch(*scientific, stexts);
  for (std::size_t i = 0; i < stexts.size(); ++i) sstore.put(stexts[i], svecs[i]);

  std::sort(listing.begin(), listing.end());
  listing.erase(std::unique(listing.begin(), listing.end()), listing.end());
  std::ostringstream ls;
  csv::write_row(ls, {"encoder", "kind", "key", "text_hash"});
  for (const auto& r : listing) csv::write_row(ls, r);
  write_text(dir / "embeddings.csv", ls.str());

  // Nearest-neighbour audit of each pool through the configured index.
  const FileBackedEmbeddingProvider rprov(rstore);
  std::ostringstream ns;
  csv::write_row(ns, {"query_ref", "rank", "pmid", "similarity"});
  for (const auto& q : corpus.queries) {
    const auto& pool = corpus.pool(q.id());
    if (pool.documents.empty()) continue;
    std::unique_ptr<VectorIndex> index;
    if (config_.embedding.index == "hnsw") {
      index = std::make_unique<HnswIndex>();
    } else {
      index = std::make_unique<ExactIndex>();
    }
    std::vector<std::string> texts;
    for (const auto& d : pool.documents) texts.push_back(d.text);
    for (const auto& v : rprov.embed(texts)) index->add(v);
    index->freeze();
    const auto qv = rprov.embed({q.text}).front();
    std::size_t rank = 0;
    for (const auto& n : index->search(qv, config_.embedding.neighbors)) {
      csv::write_row(ns, {q.id(), std::to_string(++rank), pool.documents[n.id].pmid, fmt::format("{}", n.similarity)});
    }
  }
  write_text(dir / "neighbors.csv", ns.str());
  log_ << "embed: " << rtexts.size() << " retrieval texts, " << stexts.size() << " scientific texts\n";
  return 0;
}

std::size_t Pipeline::run_rank() {
  const auto corpus = selected_corpus();
  const auto dir = stage_dir(Stage::Rank);
  reset_dir(dir);
  const FileBackedEmbeddingProvider prov(EmbeddingStore::open(stage_dir(Stage::Embed) / "retrieval"));
  const auto params = config_.ranking_params();
  std::size_t pools = 0;
  for (const auto& q : corpus.queries) {
    const auto& pool = corpus.pool(q.id());
    if (pool.documents.empty()) continue;
    std::vector<std::string> texts;
    for (const auto& d : pool.documents) texts.push_back(d.text);
    const auto docs = prov.embed(texts);
    const auto ranked = rank(prov.embed({q.text}).front(), pool, docs, params);
    std::ostringstream out;
    write_score_table(out, ranked);
    write_text(dir / (artifact_name(q.id()) + ".csv"), out.str());
    ++pools;
  }
  log_ << "rank: " << pools << " pools ranked\n";
  return 0;
}

std::size_t Pipeline::run_contradict() {
  const auto corpus = selected_corpus();
  const auto dir = stage_dir(Stage::Contradict);
  reset_dir(dir);
  const FileBackedEmbeddingProvider sci(EmbeddingStore::open(stage_dir(Stage::Embed) / "scientific"));
  const auto nli = factory_->nli(config_.contradiction.nli, config_);
  const auto params = config_.contradiction_params();
  std::vector<ContradictionReport> reports;
  for (const auto& q : corpus.queries) {
    const auto& pool = corpus.pool(q.id());
    if (pool.documents.empty()) continue;
    reports.push_back(score_pool(pool, sci, *nli, params));
    std::ostringstream out;
    write_report_csv(out, reports.back());
    write_text(dir / (artifact_name(q.id()) + ".csv"), out.str());
  }
  std::vector<const ContradictionReport*> ptrs;
  for (const auto& r : reports) ptrs.push_back(&r);
  std::ostringstream sal;
  write_salience_csv(sal, ptrs);
  write_text(dir / "salience.csv", sal.str());
  log_ << "contradict: " << reports.size() << " pools scored\n";
  return 0;
}

std::map<std::string, std::vector<ScoredDocument>> Pipeline::load_rankings(const Corpus& selected) const {
  std::map<std::string, std::vector<ScoredDocument>> out;
  for (const auto& q : selected.queries) {
    if (selected.pool(q.id()).documents.empty()) continue;
    std::ifstream in(stage_dir(Stage::Rank) / (artifact_name(q.id()) + ".csv"));
    if (!in) throw UpstreamError("rank artifacts missing for " + q.id());
    out[q.id()] = read_score_table(in);
  }
  return out;
}

std::map<std::string, ContradictionReport> Pipeline::load_reports(const Corpus& selected) const {
  std::map<std::string, ContradictionReport> out;
  for (const auto& q : selected.queries) {
    const auto& pool = selected.pool(q.id());
    if (pool.documents.empty()) continue;
    std::ifstream in(stage_dir(Stage::Contradict) / (artifact_name(q.id()) + ".csv"));
    if (!in) throw UpstreamError("contradict artifacts missing for " + q.id());
    std::vector<std::string> pmids;
    for (const auto& d : pool.documents) pmids.push_back(d.pmid);
    out.emplace(q.id(), read_report_csv(in, q.id(), pmids));
  }
  return out;
}

std::size_t Pipeline::run_generate(bool resume) {
  const auto corpus = selected_corpus();
  const auto rankings = load_rankings(corpus);
  const auto reports = load_reports(corpus);
  const auto dir = stage_dir(Stage::Generate);
  const auto records_path = dir / "records.jsonl";

  std::vector<RunRecord> existing;
  if (resume && fs::exists(records_path)) {
    std::ifstream in(records_path);
    existing = read_records(in);
  }
  fs::create_directories(dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path() != records_path || !resume) fs::remove_all(e.path());
  }

  std::vector<std::unique_ptr<GenerationProvider>> owned;
  std::vector<const GenerationProvider*> models;
  for (const auto& m : config_.generation.models) {
    owned.push_back(factory_->generation(m, config_));
    models.push_back(owned.back().get());
  }
  if (models.empty()) throw ConfigError("generation.models is empty");

  RunOptions opts;
  opts.conditions = config_.generation.conditions;
  opts.k = config_.ranking.k;
  opts.workers = config_.generation.workers;
  if (!config_.generation.prompt_template.empty()) {
    opts.prompt_template = read_text(config_.resolve(config_.generation.prompt_template));
  }
  std::ofstream append(records_path, std::ios::app);
  opts.on_record = [&](const RunRecord& r) { append << record_to_json(r) << '\n' << std::flush; };
  const auto result = run_experiment(corpus, rankings, reports, models, opts, std::move(existing));
  append.close();

  std::ostringstream rec;
  write_records(rec, result.records);
  write_text(records_path, rec.str());
  ojson failures = ojson::array();
  for (const auto& f : result.failures) {
    failures.push_back({{"query_ref", f.query_ref},
                        {"condition", condition_code(f.condition)},
                        {"model", f.model_tag},
                        {"error", f.error}});
  }
  if (!result.failures.empty()) write_text(dir / "failures.json", failures.dump(2) + "\n");
  log_ << "generate: " << result.records.size() << " records (" << result.skipped_existing << " resumed, "
       << result.failures.size() << " failed)\n";
  return result.failures.size();
}

std::size_t Pipeline::run_evaluate() {
  const auto corpus = selected_corpus();
  std::ifstream in(stage_dir(Stage::Generate) / "records.jsonl");
  if (!in) throw UpstreamError("generate artifacts missing; run `medrag generate` first");
  const auto records = read_records(in);
  const auto encoder = factory_->embedding(config_.embedding.retrieval, config_);
  const auto wv = factory_->word_vectors(config_.evaluation.word_vectors, config_);
  const auto scored = score_records(corpus, records, *encoder, *wv, config_.evaluation.workers);
  const auto rows = aggregate(scored);
  const auto dir = stage_dir(Stage::Evaluate);
  reset_dir(dir);
  std::ostringstream m, s;
  write_metrics_csv(m, rows);
  write_scores_csv(s, scored);
  write_text(dir / "metrics.csv", m.str());
  write_text(dir / "scores.csv", s.str());
  log_ << "evaluate: " << scored.size() << " answers scored into " << rows.size() << " rows\n";
  return 0;
}

std::size_t Pipeline::run_analyze() {
  const auto corpus = selected_corpus();
  const auto rankings = load_rankings(corpus);
  const auto reports = load_reports(corpus);
  std::vector<std::pair<double, double>> score_salience;
  std::vector<std::pair<int, double>> year_salience;
  for (const auto& [ref, ranked] : rankings) {
    const auto& rep = reports.at(ref);
    for (const auto& s : ranked) {
      const auto it = rep.salience.find(s.pmid);
      if (it == rep.salience.end()) continue;
      score_salience.emplace_back(s.score, it->second);
      year_salience.emplace_back(s.year, it->second);
    }
  }
  const auto dir = stage_dir(Stage::Analyze);
  reset_dir(dir);
  const auto hist = joint_histogram(score_salience);
  const auto temporal = temporal_distribution(year_salience, config_.analysis.anchor, config_.analysis.last_year,
                                              config_.analysis.width);
  if (config_.analysis.table3) {
    std::ostringstream t;
    write_table3_csv(t, hist);
    write_text(dir / "table3.csv", t.str());
  }
  if (config_.analysis.fig2) {
    std::ostringstream f;
    write_fig2_csv(f, temporal);
    write_text(dir / "fig2.csv", f.str());
  }
  if (config_.analysis.png) write_heatmap_png(dir / "fig2.png", temporal);
  ojson summary;
  summary["documents"] = hist.total;
  summary["score_out_of_range"] = hist.score_out_of_range;
  summary["salience_out_of_range"] = hist.salience_out_of_range;
  summary["years_out_of_range"] = temporal.out_of_range_years;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  log_ << "analyze: " << hist.total << " documents binned, " << hist.score_out_of_range
       << " scores clamped into [0, 1]\n";
  return 0;
}

}  // namespace medrag
