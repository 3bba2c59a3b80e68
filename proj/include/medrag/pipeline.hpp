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
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "medrag/contradiction.hpp"
#include "medrag/embedding.hpp"
#include "medrag/metrics.hpp"
#include "medrag/nli.hpp"
#include "medrag/rag.hpp"
#include "medrag/ranking.hpp"
#include "medrag/selection.hpp"

namespace medrag {

/// Where a provider's answers come from: "file" (a FileBacked store) or
/// "http" (the model server, cached under the pipeline cache directory).
struct ProviderConfig {
  std::string provider = "file";
  std::string store;  // file: store directory (word vectors: a .vec file)
  std::string url;    // http: server base URL
  std::string model_tag;
  std::size_t dimension = 384;
  std::size_t batch_size = 64;

  friend bool operator==(const ProviderConfig&, const ProviderConfig&) = default;
};

struct ModelConfig {
  std::string model_tag;
  std::string provider = "replay";  // or "http"
  std::string replay_file;
  std::string url;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct PipelineConfig {
  struct Paths {
    std::string queries;  // medicines + queries for ingest
    std::string raw_corpus = "corpus.jsonl";
    std::string work_dir = "work";
    std::string cache_dir = "cache";
    friend bool operator==(const Paths&, const Paths&) = default;
  } paths;

  struct Ingest {
    std::string eutils_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
    std::string icite_url = "https://icite.od.nih.gov";
    std::string exclusions;  // empty: bundled list
    std::size_t batch_size = 300;
    int retmax = 10000;
    std::size_t max_in_flight = 3;
    friend bool operator==(const Ingest&, const Ingest&) = default;
  } ingest;

  struct Selection {
    std::size_t cap = 20;
    std::size_t year_target = 20;
    int year_gap = 3;
    friend bool operator==(const Selection&, const Selection&) = default;
  } selection;

  struct Embedding {
    ProviderConfig retrieval{"file", "", "", "bge-small-en-v1.5", 384, 64};
    ProviderConfig scientific{"file", "", "", "scientific-encoder", 384, 64};
    std::string index = "exact";  // or "hnsw"
    std::size_t neighbors = 10;
    friend bool operator==(const Embedding&, const Embedding&) = default;
  } embedding;

  struct Ranking {
    double lambda = 0.7;
    double alpha = 0.7;
    double epsilon = 1e-5;
    std::size_t k = 5;
    friend bool operator==(const Ranking&, const Ranking&) = default;
  } ranking;

  struct Contradiction {
    double theta = 0.75;
    std::optional<double> abs_sim_gate;
    std::size_t workers = 1;
    ProviderConfig nli{"file", "", "", "nli", 0, 32};
    friend bool operator==(const Contradiction&, const Contradiction&) = default;
  } contradiction;

  struct Generation {
    std::vector<Condition> conditions{kAllConditions.begin(), kAllConditions.end()};
    std::vector<ModelConfig> models;
    std::string prompt_template;  // empty: bundled template
    int max_tokens = kMaxTokens;
    std::size_t workers = 1;
    friend bool operator==(const Generation&, const Generation&) = default;
  } generation;

  struct Evaluation {
    ProviderConfig word_vectors{"file", "", "", "word2vec", 300, 256};
    std::size_t workers = 1;
    friend bool operator==(const Evaluation&, const Evaluation&) = default;
  } evaluation;

  struct Analysis {
    int anchor = 1975;
    int last_year = 2025;
    int width = 5;
    bool table3 = true;
    bool fig2 = true;
    bool png = false;
    friend bool operator==(const Analysis&, const Analysis&) = default;
  } analysis;

  // Directory relative paths are resolved against; not serialised.
  std::filesystem::path base_dir;

  RankingParams ranking_params() const;
  SelectionParams selection_params() const;
  ContradictionParams contradiction_params() const;

  /// Range checks. Throws ConfigError.
  void validate() const;
  std::filesystem::path resolve(const std::string& p) const;

  friend bool operator==(const PipelineConfig& a, const PipelineConfig& b) {
    return a.paths == b.paths && a.ingest == b.ingest && a.selection == b.selection &&
           a.embedding == b.embedding && a.ranking == b.ranking && a.contradiction == b.contradiction &&
           a.generation == b.generation && a.evaluation == b.evaluation && a.analysis == b.analysis;
  }
};

/// Parses the JSON config. Unknown keys and wrong types are ConfigErrors;
/// absent keys keep their defaults.
PipelineConfig parse_config(std::string_view json_text, std::filesystem::path base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
/// Every key, defaults included, as indented JSON.
std::string render_config(const PipelineConfig& config);

enum class Stage { Ingest, Select, Embed, Rank, Contradict, Generate, Evaluate, Analyze };

inline constexpr std::array<Stage, 8> kAllStages = {Stage::Ingest,     Stage::Select,   Stage::Embed,
                                                    Stage::Rank,       Stage::Contradict, Stage::Generate,
                                                    Stage::Evaluate,   Stage::Analyze};

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);
/// Stages whose artifacts `s` reads.
std::vector<Stage> upstream_of(Stage s);

struct StageManifest {
  std::string stage;
  std::string config_hash;
  std::map<std::string, std::string> inputs;   // path relative to work_dir -> sha256
  std::map<std::string, std::string> outputs;

  friend bool operator==(const StageManifest&, const StageManifest&) = default;
};

struct StageOutcome {
  Stage stage = Stage::Select;
  bool skipped = false;
  std::size_t failures = 0;  // generation cells that failed
};

struct StageFlags {
  bool force = false;
  bool resume = false;
};

/// Factories turning provider configs into live providers. Tests swap these
/// to inject fakes.
struct ProviderFactory {
  virtual ~ProviderFactory() = default;
  virtual std::unique_ptr<EmbeddingProvider> embedding(const ProviderConfig& c, const PipelineConfig& cfg) const;
  virtual std::unique_ptr<NliProvider> nli(const ProviderConfig& c, const PipelineConfig& cfg) const;
  virtual std::unique_ptr<GenerationProvider> generation(const ModelConfig& m, const PipelineConfig& cfg) const;
  virtual std::unique_ptr<WordVectorProvider> word_vectors(const ProviderConfig& c, const PipelineConfig& cfg) const;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::ostream& log, std::shared_ptr<const ProviderFactory> factory = nullptr);

  /// Runs one stage. Throws UpstreamError when a prerequisite stage has no
  /// current artifacts; skips when its manifest already matches.
  StageOutcome run(Stage stage, const StageFlags& flags = {});
  /// Select through analyze, in order.
  std::vector<StageOutcome> run_all(const StageFlags& flags = {});

  /// Hash of the configuration sections `stage` depends on, its upstream
  /// stages' included.
  std::string config_hash(Stage stage) const;
  std::filesystem::path stage_dir(Stage stage) const;
  std::optional<StageManifest> manifest(Stage stage) const;
  const PipelineConfig& config() const { return config_; }

 private:
  using Files = std::map<std::string, std::filesystem::path>;

  void check_upstream(Stage stage) const;
  Files stage_inputs(Stage stage) const;
  bool up_to_date(Stage stage, const Files& inputs) const;
  void write_manifest(Stage stage, const Files& inputs) const;

  std::size_t run_ingest();
  std::size_t run_select();
  std::size_t run_embed();
  std::size_t run_rank();
  std::size_t run_contradict();
  std::size_t run_generate(bool resume);
  std::size_t run_evaluate();
  std::size_t run_analyze();

  Corpus selected_corpus() const;
  std::map<std::string, std::vector<ScoredDocument>> load_rankings(const Corpus& selected) const;
  std::map<std::string, ContradictionReport> load_reports(const Corpus& selected) const;

  PipelineConfig config_;
  std::ostream& log_;
  std::shared_ptr<const ProviderFactory> factory_;
};

/// File name used for a query's per-pool artifacts ("3:dosage" -> "3_dosage").
std::string artifact_name(std::string_view query_ref);

/// SHA-256 over a file, or over the sorted relative paths and contents of a
/// directory tree.
std::string content_hash(const std::filesystem::path& path);

}  // namespace medrag
