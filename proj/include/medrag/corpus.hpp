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

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace medrag {

/// The six consumer-information needs asked about every medicine.
enum class Slot {
  Indications,
  PreUseWarnings,
  DrugInteractions,
  Dosage,
  OnTreatmentGuidance,
  AdverseEffects,
};

inline constexpr std::array<Slot, 6> kAllSlots = {
    Slot::Indications, Slot::PreUseWarnings,      Slot::DrugInteractions,
    Slot::Dosage,      Slot::OnTreatmentGuidance, Slot::AdverseEffects,
};

/// Stable snake_case identifier used in files ("pre_use_warnings").
std::string_view slot_name(Slot slot);
/// Inverse of slot_name; throws ParseError on an unknown name.
Slot parse_slot(std::string_view name);
/// 1-based position in kAllSlots.
int slot_index(Slot slot);
/// The standard question phrasing for a slot, e.g. "How do I use ABACAVIR?".
std::string question_for(Slot slot, std::string_view medicine_name);

struct Medicine {
  int id = 0;
  std::string name;

  friend bool operator==(const Medicine&, const Medicine&) = default;
};

struct QueryInstance {
  int medicine_id = 0;
  Slot slot = Slot::Indications;
  std::string text;
  // Empty when no reference is available; such queries are left out of
  // metric averages.
  std::string reference_answer;

  /// "<medicine_id>:<slot_name>", the key documents refer to.
  std::string id() const;

  friend bool operator==(const QueryInstance&, const QueryInstance&) = default;
};

std::string make_query_ref(int medicine_id, Slot slot);

struct Document {
  std::string pmid;
  int year = 0;
  long long citations = 0;
  std::string text;
  std::vector<std::string> sentences;

  friend bool operator==(const Document&, const Document&) = default;
};

/// Validates the fields and derives `sentences`. Throws IntegrityError when
/// pmid or text is empty, the year lies outside [1900, current year], or the
/// citation count is negative.
Document make_document(std::string pmid, int year, long long citations, std::string text);

enum class PoolStage { Raw, Selected };

std::string_view stage_name(PoolStage stage);

inline constexpr std::size_t kMaxSelectedPool = 20;

struct EvidencePool {
  std::string query_ref;
  std::vector<Document> documents;
  PoolStage stage = PoolStage::Raw;

  /// Throws IntegrityError on duplicate pmids or an oversized Selected pool.
  void validate() const;

  friend bool operator==(const EvidencePool&, const EvidencePool&) = default;
};

struct Corpus {
  std::vector<Medicine> medicines;
  std::vector<QueryInstance> queries;
  // One pool per query id (possibly empty).
  std::map<std::string, EvidencePool> pools;

  const Medicine& medicine(int id) const;
  const QueryInstance& query(std::string_view query_ref) const;
  const EvidencePool& pool(std::string_view query_ref) const;
  std::size_t document_count() const;

  /// Referential integrity and per-type invariants.
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Rule-based splitter: a sentence ends at [.?!] (plus closing quotes or
/// brackets) followed by whitespace and an uppercase letter or digit, unless
/// the terminator closes a known abbreviation. Returned sentences are trimmed.
std::vector<std::string> segment_sentences(std::string_view text);

Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);

}  // namespace medrag
