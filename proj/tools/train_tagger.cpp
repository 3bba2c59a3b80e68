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

// Trains the bundled part-of-speech tagger from a tagged corpus and writes
// the frozen weights file the library loads at runtime.
//
//   medrag-train-tagger data/pos/train.txt data/pos/weights.json

#include <CLI11.hpp>
#include <iostream>

#include "medrag/error.hpp"
#include "medrag/pos_tagger.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Train the query-term part-of-speech tagger"};
  std::string corpus, out;
  int iterations = 10;
  unsigned seed = 7;
  app.add_option("corpus", corpus, "word/TAG training sentences")->required()->check(CLI::ExistingFile);
  app.add_option("weights", out, "output weights file")->required();
  app.add_option("--iterations", iterations, "training epochs")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "shuffle seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto sentences = medrag::read_tagged_corpus(corpus);
    const auto tagger = medrag::PosTagger::train(sentences, iterations, seed);
    tagger.save(out);

    std::size_t right = 0, total = 0;
    for (const auto& s : sentences) {
      const auto got = tagger.tag(s.words);
      for (std::size_t i = 0; i < got.size(); ++i) right += got[i] == s.tags[i];
      total += got.size();
    }
    std::cout << sentences.size() << " sentences, " << tagger.feature_count() << " features, training accuracy "
              << static_cast<double>(right) / static_cast<double>(total) << "\n";
  } catch (const medrag::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
