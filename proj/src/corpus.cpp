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

#include "medrag/corpus.hpp"

#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <nlohmann/json.hpp>

#include "medrag/error.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr int kMinYear = 1900;

int current_year() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  return tm.tm_year + 1900;
}

// Lowercased tokens (including their final period) that never end a sentence.
const std::set<std::string, std::less<>>& abbreviations() {
  static const std::set<std::string, std::less<>> kList = {
      "e.g.", "i.e.", "vs.", "fig.", "figs.", "al.", "approx.", "ca.", "cf.",
      "dr.",  "eq.",  "no.", "ref.", "resp.", "incl.", "mr.",  "mrs.", "ms.",
      "prof.", "st.", "u.s.", "etc.", "vol.", "p.", "pp.", "min.", "max.",
  };
  return kList;
}

bool is_closer(char c) { return c == ')' || c == ']' || c == '"' || c == '\''; }

bool ends_with_abbreviation(std::string_view text, std::size_t period) {
  std::size_t begin = period;
  while (begin > 0 && !is_space(text[begin - 1]) && text[begin - 1] != '(') --begin;
  const auto word = to_lower(text.substr(begin, period - begin + 1));
  return abbreviations().count(word) > 0;
}

template <typename T>
T require(const json& rec, const char* field, std::size_t line, const char* kind) {
  const auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) {
    throw ParseError(line, std::string(kind) + " record missing field '" + field + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(line, std::string(kind) + " record has a mistyped field '" + field + "'");
  }
}

}  // namespace

std::string_view slot_name(Slot slot) {
  switch (slot) {
    case Slot::Indications: return "indications";
    case Slot::PreUseWarnings: return "pre_use_warnings";
    case Slot::DrugInteractions: return "drug_interactions";
    case Slot::Dosage: return "dosage";
    case Slot::OnTreatmentGuidance: return "on_treatment_guidance";
    case Slot::AdverseEffects: return "adverse_effects";
  }
  return "?";
}

Slot parse_slot(std::string_view name) {
  for (Slot s : kAllSlots) {
    if (slot_name(s) == name) return s;
  }
  throw ParseError(0, "unknown query slot '" + std::string(name) + "'");
}

int slot_index(Slot slot) { return static_cast<int>(slot) + 1; }

std::string question_for(Slot slot, std::string_view medicine_name) {
  const std::string m(medicine_name);
  switch (slot) {
    case Slot::Indications: return "Why am I using " + m + "?";
    case Slot::PreUseWarnings: return "What should I know before I use " + m + "?";
    case Slot::DrugInteractions: return "What if I am taking other medicines with " + m + "?";
    case Slot::Dosage: return "How do I use " + m + "?";
    case Slot::OnTreatmentGuidance: return "What should I know while using " + m + "?";
    case Slot::AdverseEffects: return "Are there any side effects of " + m + "?";
  }
  return m;
}

std::string make_query_ref(int medicine_id, Slot slot) {
  return std::to_string(medicine_id) + ":" + std::string(slot_name(slot));
}

std::string QueryInstance::id() const { return make_query_ref(medicine_id, slot); }

std::string_view stage_name(PoolStage stage) {
  return stage == PoolStage::Raw ? "raw" : "selected";
}

std::vector<std::string> segment_sentences(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const char c = text[i];
    if (c != '.' && c != '?' && c != '!') continue;
    std::size_t end = i + 1;
    while (end < n && (text[end] == '.' || text[end] == '?' || text[end] == '!')) ++end;
    while (end < n && is_closer(text[end])) ++end;
    if (end >= n || !is_space(text[end])) continue;
    std::size_t next = end;
    while (next < n && is_space(text[next])) ++next;
    if (next >= n || !(is_upper(text[next]) || is_digit(text[next]))) continue;
    if (c == '.' && end == i + 1 && ends_with_abbreviation(text, i)) continue;
    const auto sentence = trim(text.substr(start, end - start));
    if (!sentence.empty()) out.emplace_back(sentence);
    start = next;
    i = next - 1;
  }
  const auto tail = trim(text.substr(std::min(start, n)));
  if (!tail.empty() || out.empty()) out.emplace_back(tail);
  return out;
}

Document make_document(std::string pmid, int year, long long citations, std::string text) {
  if (pmid.empty()) throw IntegrityError("document pmid is empty");
  if (year < kMinYear || year > current_year()) {
    throw IntegrityError("document " + pmid + ": year " + std::to_string(year) +
                         " outside [1900, " + std::to_string(current_year()) + "]");
  }
  if (citations < 0) throw IntegrityError("document " + pmid + ": negative citation count");
  if (trim(text).empty()) throw IntegrityError("document " + pmid + ": empty abstract text");
  Document d;
  d.pmid = std::move(pmid);
  d.year = year;
  d.citations = citations;
  d.text = std::move(text);
  d.sentences = segment_sentences(d.text);
  return d;
}

void EvidencePool::validate() const {
  if (stage == PoolStage::Selected && documents.size() > kMaxSelectedPool) {
    throw IntegrityError("pool " + query_ref + ": selected pool holds " +
                         std::to_string(documents.size()) + " documents (max 20)");
  }
  std::set<std::string_view> seen;
  for (const auto& d : documents) {
    if (!seen.insert(d.pmid).second) {
      throw IntegrityError("pool " + query_ref + ": duplicate pmid " + d.pmid);
    }
  }
}

const Medicine& Corpus::medicine(int id) const {
  for (const auto& m : medicines) {
    if (m.id == id) return m;
  }
  throw LookupError("no medicine with id " + std::to_string(id));
}

const QueryInstance& Corpus::query(std::string_view query_ref) const {
  for (const auto& q : queries) {
    if (q.id() == query_ref) return q;
  }
  throw LookupError("no query " + std::string(query_ref));
}

const EvidencePool& Corpus::pool(std::string_view query_ref) const {
  const auto it = pools.find(std::string(query_ref));
  if (it == pools.end()) throw LookupError("no pool for query " + std::string(query_ref));
  return it->second;
}

std::size_t Corpus::document_count() const {
  std::size_t n = 0;
  for (const auto& [ref, pool] : pools) n += pool.documents.size();
  return n;
}

void Corpus::validate() const {
  std::set<int> ids;
  for (const auto& m : medicines) {
    if (m.name.empty()) throw IntegrityError("medicine " + std::to_string(m.id) + " has no name");
    if (!ids.insert(m.id).second) {
      throw IntegrityError("duplicate medicine id " + std::to_string(m.id));
    }
  }
  std::map<int, std::set<Slot>> slots;
  for (const auto& q : queries) {
    if (!ids.count(q.medicine_id)) {
      throw IntegrityError("query " + q.id() + " refers to unknown medicine");
    }
    if (!slots[q.medicine_id].insert(q.slot).second) {
      throw IntegrityError("duplicate query " + q.id());
    }
    if (!icontains(q.text, medicine(q.medicine_id).name)) {
      throw IntegrityError("query " + q.id() + " does not mention its medicine");
    }
  }
  for (const auto& m : medicines) {
    if (slots[m.id].size() != kAllSlots.size()) {
      throw IntegrityError("medicine " + m.name + " has " + std::to_string(slots[m.id].size()) +
                           " queries, expected 6");
    }
  }
  for (const auto& [ref, pool] : pools) {
    query(ref);
    pool.validate();
  }
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::map<std::string, PoolStage> stages;
  std::vector<std::pair<std::size_t, std::string>> doc_refs;
  std::map<std::string, std::set<std::string>> pool_pmids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(lineno, "record is not an object");
    const auto kind = require<std::string>(rec, "kind", lineno, "corpus");
    if (kind == "medicine") {
      corpus.medicines.push_back(Medicine{require<int>(rec, "id", lineno, "medicine"),
                                          require<std::string>(rec, "name", lineno, "medicine")});
    } else if (kind == "query") {
      QueryInstance q;
      q.medicine_id = require<int>(rec, "medicine_id", lineno, "query");
      try {
        q.slot = parse_slot(require<std::string>(rec, "slot", lineno, "query"));
      } catch (const ParseError& e) {
        throw ParseError(lineno, e.what());
      }
      q.text = require<std::string>(rec, "text", lineno, "query");
      q.reference_answer = rec.value("reference_answer", std::string{});
      if (rec.contains("id") && rec["id"] != q.id()) {
        throw ParseError(lineno, "query id does not match medicine_id/slot");
      }
      const auto stage = rec.value("stage", std::string("raw"));
      if (stage != "raw" && stage != "selected") throw ParseError(lineno, "unknown stage " + stage);
      stages[q.id()] = stage == "raw" ? PoolStage::Raw : PoolStage::Selected;
      corpus.queries.push_back(std::move(q));
    } else if (kind == "document") {
      const auto pmid = require<std::string>(rec, "pmid", lineno, "document");
      const auto year = require<int>(rec, "year", lineno, "document");
      const auto citations = require<long long>(rec, "citations", lineno, "document");
      auto text = require<std::string>(rec, "text", lineno, "document");
      const auto ref = require<std::string>(rec, "query_ref", lineno, "document");
      Document doc;
      try {
        doc = make_document(pmid, year, citations, std::move(text));
      } catch (const IntegrityError& e) {
        throw ParseError(lineno, e.what());
      }
      auto& pool = corpus.pools[ref];
      pool.query_ref = ref;
      if (!pool_pmids[ref].insert(doc.pmid).second) {
        throw IntegrityError("line " + std::to_string(lineno) + ": duplicate pmid " + doc.pmid +
                             " in pool " + ref);
      }
      pool.documents.push_back(std::move(doc));
      doc_refs.emplace_back(lineno, ref);
    } else {
      throw ParseError(lineno, "unknown record kind '" + kind + "'");
    }
  }
  std::set<std::string> known;
  for (const auto& q : corpus.queries) known.insert(q.id());
  for (const auto& [l, ref] : doc_refs) {
    if (!known.count(ref)) {
      throw IntegrityError("line " + std::to_string(l) + ": document refers to unknown query " + ref);
    }
  }
  for (const auto& q : corpus.queries) {
    auto& pool = corpus.pools[q.id()];
    pool.query_ref = q.id();
    pool.stage = stages[q.id()];
  }
  corpus.validate();
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  auto medicines = corpus.medicines;
  std::sort(medicines.begin(), medicines.end(),
            [](const Medicine& a, const Medicine& b) { return a.id < b.id; });
  auto queries = corpus.queries;
  std::sort(queries.begin(), queries.end(), [](const QueryInstance& a, const QueryInstance& b) {
    return std::pair(a.medicine_id, a.slot) < std::pair(b.medicine_id, b.slot);
  });
  for (const auto& m : medicines) {
    ordered_json rec;
    rec["kind"] = "medicine";
    rec["id"] = m.id;
    rec["name"] = m.name;
    out << rec.dump() << '\n';
  }
  for (const auto& q : queries) {
    const auto it = corpus.pools.find(q.id());
    ordered_json rec;
    rec["kind"] = "query";
    rec["id"] = q.id();
    rec["medicine_id"] = q.medicine_id;
    rec["slot"] = slot_name(q.slot);
    rec["text"] = q.text;
    rec["reference_answer"] = q.reference_answer;
    rec["stage"] = stage_name(it == corpus.pools.end() ? PoolStage::Raw : it->second.stage);
    out << rec.dump() << '\n';
  }
  for (const auto& q : queries) {
    const auto it = corpus.pools.find(q.id());
    if (it == corpus.pools.end()) continue;
    for (const auto& d : it->second.documents) {
      ordered_json rec;
      rec["kind"] = "document";
      rec["pmid"] = d.pmid;
      rec["year"] = d.year;
      rec["citations"] = d.citations;
      rec["text"] = d.text;
      rec["query_ref"] = q.id();
      out << rec.dump() << '\n';
    }
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
  if (!out) throw Error("failed writing corpus file " + path.string());
}

}  // namespace medrag
