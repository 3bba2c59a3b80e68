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

// Builds a self-contained offline fixture from a raw corpus: FileBacked
// embedding and NLI stores, a word-vector file, recorded answers for two
// scripted models, and a config.json tying them together.
//
// Encoders are hashed bags of words, so sentences differing only by a
// negation stay close in cosine while the NLI heuristic marks them as
// contradicting.

#include <CLI11.hpp>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <regex>
#include <set>

#include "medrag/hashing.hpp"
#include "medrag/pipeline.hpp"
#include "medrag/text.hpp"

namespace fs = std::filesystem;
using namespace medrag;

namespace {

constexpr std::size_t kDim = 384;
constexpr std::size_t kWordDim = 50;
constexpr const char* kTimestamp = "2026-01-01T00:00:00Z";

const std::set<std::string> kStopwords = {"a",  "an", "and", "are", "as",   "at", "be",   "by",  "for", "i",
                                          "if", "in", "is",  "it",  "of",   "on", "or",   "the", "to",  "was",
                                          "we", "with", "were", "this", "that", "am", "do", "my",  "what"};
const std::set<std::string> kNegations = {"not", "no", "never", "without", "neither", "nor"};

std::uint64_t token_key(const std::string& token, std::string_view salt) {
  return std::stoull(sha256_hex(std::string(salt) + token).substr(0, 15), nullptr, 16);
}

Embedding bag_of_words(std::string_view text, std::string_view salt) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kDim);
  for (const auto& t : word_tokens(text)) {
    const auto h = token_key(t, salt);
    v(static_cast<Eigen::Index>(h % kDim)) += (h >> 20) & 1 ? 1.0 : -1.0;
  }
  if (v.norm() == 0) v(0) = 1;  // punctuation-only text
  return Embedding(v);
}

Eigen::VectorXd word_vector(const std::string& token) {
  Eigen::VectorXd v(kWordDim);
  auto state = token_key(token, "w2v");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    v(i) = static_cast<double>(state >> 40) / static_cast<double>(1ULL << 24) - 0.5;
  }
  return v;
}

bool negated(std::string_view sentence) {
  for (const auto& t : word_tokens(sentence)) {
    if (kNegations.count(t)) return true;
  }
  return false;
}

double jaccard(std::string_view a, std::string_view b) {
  const auto ta = word_tokens(a), tb = word_tokens(b);
  const std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
  std::size_t both = 0;
  for (const auto& t : sa) both += sb.count(t);
  const auto either = sa.size() + sb.size() - both;
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

NliProbs heuristic_nli(std::string_view premise, std::string_view hypothesis) {
  const double overlap = jaccard(premise, hypothesis);
  if (negated(premise) != negated(hypothesis)) {
    const double con = 0.6 + 0.35 * overlap;
    return {0.25 * (1 - con), 0.75 * (1 - con), con};
  }
  const double ent = 0.2 + 0.6 * overlap;
  const double con = 0.05 + 0.1 * (1 - overlap);
  return {ent, 1 - ent - con, con};
}

// Answers from the documents named in the prompt.
class ScriptedModel final : public GenerationProvider {
 public:
  ScriptedModel(std::string tag, const std::map<std::string, const Document*>& docs, std::vector<ReplayEntry>& log)
      : tag_(std::move(tag)), docs_(docs), log_(log) {}

  const std::string& model_tag() const override { return tag_; }
  GenerationKind kind() const override { return GenerationKind::Replay; }

  Generation generate(const std::string& prompt) const override {
    static const std::regex pmid_re(R"(\| PMID (\S+) \|)");
    std::vector<const Document*> context;
    for (std::sregex_iterator it(prompt.begin(), prompt.end(), pmid_re), end; it != end; ++it) {
      context.push_back(docs_.at((*it)[1].str()));
    }
    std::string text;
    if (tag_ == "model-a") {
      text = context.front()->sentences.front();
    } else if (context.size() < 2) {
      text = " insufficient evidence.";
    } else {
      text = context.back()->sentences.back();
    }
    std::lock_guard lock(mu_);
    log_.push_back({tag_, sha256_hex(prompt), text, false, kTimestamp});
    return {text, false, kTimestamp};
  }

 private:
  std::string tag_;
  const std::map<std::string, const Document*>& docs_;
  std::vector<ReplayEntry>& log_;
  mutable std::mutex mu_;
};

struct ScriptedFactory final : ProviderFactory {
  std::map<std::string, const Document*> docs;
  mutable std::vector<ReplayEntry> entries;

  std::unique_ptr<GenerationProvider> generation(const ModelConfig& m, const PipelineConfig&) const override {
    return std::make_unique<ScriptedModel>(m.model_tag, docs, entries);
  }
};

PipelineConfig fixture_config(const fs::path& out) {
  PipelineConfig c;
  c.base_dir = out;
  c.paths.raw_corpus = "corpus.jsonl";
  c.embedding.retrieval.store = "stores/retrieval";
  c.embedding.retrieval.dimension = kDim;
  c.embedding.scientific.store = "stores/scientific";
  c.embedding.scientific.dimension = kDim;
  c.contradiction.nli.store = "stores/nli";
  c.generation.models = {{"model-a", "replay", "replay.jsonl", ""}, {"model-b", "replay", "replay.jsonl", ""}};
  c.evaluation.word_vectors.store = "stores/words.vec";
  c.evaluation.word_vectors.dimension = kWordDim;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Build an offline fixture (stores, replay answers, config) from a raw corpus"};
  std::string corpus_path, out_dir;
  app.add_option("--corpus", corpus_path, "raw corpus JSONL")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (replaced)")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = fs::absolute(out_dir);
    fs::remove_all(out);
    fs::create_directories(out / "stores");
    fs::copy_file(corpus_path, out / "corpus.jsonl");
    const auto corpus = load_corpus(out / "corpus.jsonl");

    std::set<std::string> texts;
    for (const auto& q : corpus.queries) {
      texts.insert(q.text);
      if (!q.reference_answer.empty()) texts.insert(q.reference_answer);
    }
    for (const auto& [ref, pool] : corpus.pools) {
      for (const auto& d : pool.documents) {
        texts.insert(d.text);
        texts.insert(d.sentences.begin(), d.sentences.end());
      }
    }
    texts.insert(std::string(kInsufficientEvidence));

    const auto retrieval = EmbeddingStore::create(out / "stores/retrieval", kDim, "bge-small-en-v1.5");
    const auto scientific = EmbeddingStore::create(out / "stores/scientific", kDim, "scientific-encoder");
    for (const auto& t : texts) {
      retrieval.put(t, bag_of_words(t, "retrieval"));
      scientific.put(t, bag_of_words(t, "scientific"));
    }

    // Every ordered cross-document sentence pair of every raw pool, so any
    // selection and any theta finds its NLI result.
    auto nli = NliStore::create(out / "stores/nli", "nli");
    std::set<std::string> scored;
    for (const auto& [ref, pool] : corpus.pools) {
      for (const auto& a : pool.documents) {
        for (const auto& b : pool.documents) {
          if (&a == &b) continue;
          for (const auto& p : a.sentences) {
            for (const auto& h : b.sentences) {
              const auto key = pair_hash(p, h);
              if (scored.insert(key).second) nli.put(key, heuristic_nli(p, h));
            }
          }
        }
      }
    }
    nli.compact();

    std::set<std::string> vocab;
    for (const auto& t : texts) {
      for (const auto& w : word_tokens(t)) {
        if (!kStopwords.count(w)) vocab.insert(w);
      }
    }
    {
      std::ofstream wv(out / "stores/words.vec");
      wv << vocab.size() << ' ' << kWordDim << '\n';
      for (const auto& w : vocab) {
        wv << w;
        for (double x : word_vector(w)) wv << ' ' << fmt::format("{:.6f}", x);
        wv << '\n';
      }
    }

    const auto config = fixture_config(out);
    {
      std::ofstream cf(out / "config.json");
      cf << render_config(config);
    }

    // Record the two models' answers by running the pipeline up to
    // generation in a scratch work directory.
    auto scratch = config;
    scratch.paths.work_dir = "scratch-work";
    auto factory = std::make_shared<ScriptedFactory>();
    const auto selected_docs = corpus;  // pmids are unique across the fixture
    for (const auto& [ref, pool] : selected_docs.pools) {
      for (const auto& d : pool.documents) factory->docs[d.pmid] = &d;
    }
    std::ostringstream log;
    Pipeline pipe(scratch, log, factory);
    for (auto s : {Stage::Select, Stage::Embed, Stage::Rank, Stage::Contradict, Stage::Generate}) pipe.run(s);

    auto entries = factory->entries;
    std::sort(entries.begin(), entries.end(), [](const ReplayEntry& a, const ReplayEntry& b) {
      return std::tie(a.model, a.prompt_hash) < std::tie(b.model, b.prompt_hash);
    });
    entries.erase(std::unique(entries.begin(), entries.end(),
                              [](const ReplayEntry& a, const ReplayEntry& b) {
                                return a.model == b.model && a.prompt_hash == b.prompt_hash;
                              }),
                  entries.end());
    {
      std::ofstream rf(out / "replay.jsonl");
      write_replay_entries(rf, entries);
    }
    for (const auto& e : entries) {
      const auto answer = normalize_answer(e.text);
      retrieval.put(answer, bag_of_words(answer, "retrieval"));
    }
    fs::remove_all(out / "scratch-work");
    std::cout << fmt::format("fixture: {} texts, {} NLI pairs, {} words, {} recorded answers -> {}\n", texts.size(),
                             scored.size(), vocab.size(), entries.size(), out.string());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "medrag-fixturegen: " << e.what() << '\n';
    return 1;
  }
}
