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

// medrag: runs the evidence pipeline stage by stage.
//
//   medrag --config run.json select
//   medrag --config run.json rank --lambda 0.5
//   medrag --config run.json run
//
// Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 upstream
// artifacts missing or stale, 4 provider failure.

#include <CLI11.hpp>
#include <iostream>

#include "medrag/error.hpp"
#include "medrag/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kUpstream = 3, kProvider = 4 };

struct Overrides {
  std::optional<double> lambda, alpha, theta, abs_sim_gate;
  std::optional<std::size_t> k;
  std::vector<std::string> conditions, models;
  bool table3 = false, fig2 = false, png = false;
};

void apply(const Overrides& o, medrag::PipelineConfig& c) {
  if (o.lambda) c.ranking.lambda = *o.lambda;
  if (o.alpha) c.ranking.alpha = *o.alpha;
  if (o.k) c.ranking.k = *o.k;
  if (o.theta) c.contradiction.theta = *o.theta;
  if (o.abs_sim_gate) c.contradiction.abs_sim_gate = o.abs_sim_gate;
  if (!o.conditions.empty()) {
    c.generation.conditions.clear();
    for (const auto& s : o.conditions) c.generation.conditions.push_back(medrag::parse_condition(s));
  }
  if (!o.models.empty()) {
    std::vector<medrag::ModelConfig> keep;
    for (const auto& m : c.generation.models) {
      if (std::find(o.models.begin(), o.models.end(), m.model_tag) != o.models.end()) keep.push_back(m);
    }
    if (keep.size() != o.models.size()) throw medrag::ConfigError("--model names a model missing from the config");
    c.generation.models = keep;
  }
  if (o.table3 || o.fig2) {
    c.analysis.table3 = o.table3;
    c.analysis.fig2 = o.fig2;
  }
  if (o.png) c.analysis.png = true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contradiction-aware retrieval-augmented answering over PubMed evidence"};
  app.require_subcommand(1);
  std::string config_path;
  long long seed = 0;
  bool force = false;
  app.add_option("-c,--config", config_path, "pipeline configuration (JSON)");
  app.add_option("--seed", seed, "accepted for scripting compatibility; the pipeline is deterministic");
  app.add_flag("-f,--force", force, "rerun even when the stage manifest is current");

  Overrides o;
  bool resume = false;
  bool defaults = false;

  std::map<CLI::App*, medrag::Stage> stage_of;
  for (auto s : medrag::kAllStages) {
    auto* sub = app.add_subcommand(std::string(medrag::stage_name(s)));
    stage_of[sub] = s;
    switch (s) {
      case medrag::Stage::Ingest: sub->description("search PubMed and build the raw corpus"); break;
      case medrag::Stage::Select: sub->description("temporal-citation balanced selection"); break;
      case medrag::Stage::Embed: sub->description("embed queries, abstracts and sentences"); break;
      case medrag::Stage::Rank:
        sub->description("MMR with temporal weighting, per query");
        sub->add_option("--lambda", o.lambda, "relevance/redundancy balance")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--alpha", o.alpha, "MMR/recency balance")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--k", o.k, "context size")->check(CLI::PositiveNumber);
        break;
      case medrag::Stage::Contradict:
        sub->description("sentence-pair NLI contradiction scores and salience");
        sub->add_option("--theta", o.theta, "sentence similarity floor");
        sub->add_option("--abs-sim-gate", o.abs_sim_gate, "skip document pairs below this abstract similarity");
        break;
      case medrag::Stage::Generate:
        sub->description("answer every query under each retrieval condition");
        sub->add_option("--condition", o.conditions, "ms, mc or lc (repeatable)");
        sub->add_option("--model", o.models, "restrict to these configured models (repeatable)");
        sub->add_flag("--resume", resume, "keep existing records and fill in the rest");
        break;
      case medrag::Stage::Evaluate: sub->description("score answers against reference answers"); break;
      case medrag::Stage::Analyze:
        sub->description("binned score/salience tables");
        sub->add_flag("--table3", o.table3, "score x salience frequency grid");
        sub->add_flag("--fig2", o.fig2, "salience distribution per five-year interval");
        sub->add_flag("--png", o.png, "also render the interval heatmap");
        break;
    }
  }
  auto* run = app.add_subcommand("run", "select through analyze");
  auto* show = app.add_subcommand("config", "print the effective configuration");
  show->add_flag("--defaults", defaults, "print the built-in defaults instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (show->parsed() && defaults) {
      std::cout << medrag::render_config(medrag::PipelineConfig{});
      return kOk;
    }
    if (config_path.empty()) throw medrag::ConfigError("--config is required");
    auto config = medrag::load_config(config_path);
    apply(o, config);
    config.validate();
    if (show->parsed()) {
      std::cout << medrag::render_config(config);
      return kOk;
    }

    medrag::Pipeline pipeline(config, std::cerr);
    const medrag::StageFlags flags{force, resume};
    std::size_t failures = 0;
    if (run->parsed()) {
      for (const auto& r : pipeline.run_all(flags)) failures += r.failures;
    } else {
      for (const auto& [sub, stage] : stage_of) {
        if (sub->parsed()) failures += pipeline.run(stage, flags).failures;
      }
    }
    if (failures > 0) {
      std::cerr << "error: " << failures << " generation cells failed; see work/generate/failures.json\n";
      return kProvider;
    }
    return kOk;
  } catch (const medrag::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const medrag::UpstreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUpstream;
  } catch (const medrag::TransportError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const medrag::ProtocolError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const medrag::LookupError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kProvider;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}
