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

#include "medrag/pubmed.hpp"

#include <cstdlib>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "medrag/error.hpp"
#include "medrag/parallel.hpp"
#include "medrag/text.hpp"

namespace medrag {
namespace {

namespace pt = boost::property_tree;

constexpr const char* kXmlText = "<xmltext>";
constexpr const char* kXmlAttr = "<xmlattr>";

// Keeps letters, digits, spaces and intra-word punctuation; quotes and field
// brackets would break out of a PubMed phrase.
std::string phrase_safe(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (is_word_char(c) || c == '-' || c == '\'' || c == '.' || c == '/') {
      out.push_back(c);
    } else if (!out.empty() && out.back() != ' ') {
      out.push_back(' ');
    }
  }
  return std::string(trim(out));
}

std::string with_filter(std::string expr, std::string_view language_filter) {
  if (!language_filter.empty()) {
    expr += " AND ";
    expr += language_filter;
  }
  return expr;
}

void collect_text(const pt::ptree& node, std::string& out) {
  for (const auto& [key, child] : node) {
    if (key == kXmlText) {
      out += child.data();
    } else if (key != kXmlAttr && key != "<xmlcomment>") {
      collect_text(child, out);
    }
  }
  out += node.data();
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::string text_of(const pt::ptree& node) {
  std::string raw;
  collect_text(node, raw);
  return collapse_whitespace(raw);
}

const pt::ptree* child(const pt::ptree& node, std::string_view path) {
  const pt::ptree* cur = &node;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto dot = path.find('.', start);
    const auto key = std::string(path.substr(start, dot == std::string_view::npos ? std::string_view::npos
                                                                                   : dot - start));
    const auto it = cur->find(key);
    if (it == cur->not_found()) return nullptr;
    cur = &it->second;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return cur;
}

std::optional<int> year_of(const pt::ptree& citation) {
  static const char* kPaths[] = {
      "Article.Journal.JournalIssue.PubDate.Year",
      "Article.Journal.JournalIssue.PubDate.MedlineDate",
      "Article.ArticleDate.Year",
      "DateCompleted.Year",
  };
  for (const char* p : kPaths) {
    if (const auto* node = child(citation, p)) {
      if (auto y = parse_publication_year(text_of(*node))) return y;
    }
  }
  return std::nullopt;
}

FetchedArticle parse_article(const pt::ptree& article) {
  FetchedArticle out;
  const auto* citation = child(article, "MedlineCitation");
  if (citation == nullptr) return out;
  if (const auto* pmid = child(*citation, "PMID")) out.pmid = std::string(trim(text_of(*pmid)));
  out.year = year_of(*citation);
  if (const auto* abstract = child(*citation, "Article.Abstract")) {
    std::vector<std::string> parts;
    for (const auto& [key, node] : *abstract) {
      if (key != "AbstractText") continue;
      auto part = text_of(node);
      if (!part.empty()) parts.push_back(std::move(part));
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i > 0) out.abstract.push_back(' ');
      out.abstract += parts[i];
    }
  }
  pt::ptree wrapper;
  wrapper.add_child("PubmedArticle", article);
  std::ostringstream xml;
  pt::write_xml(xml, wrapper);
  out.xml = xml.str();
  return out;
}

pt::ptree read_xml_string(std::string_view xml) {
  std::istringstream in{std::string(xml)};
  pt::ptree tree;
  pt::read_xml(in, tree, pt::xml_parser::no_concat_text | pt::xml_parser::no_comments);
  return tree;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view data) {
  std::filesystem::create_directories(p.parent_path());
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache file " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  }
  std::filesystem::rename(tmp, p);
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

std::string_view tier_name(QueryTier tier) {
  switch (tier) {
    case QueryTier::ExactSentence: return "exact_sentence";
    case QueryTier::ProximityTerms: return "proximity_terms";
    case QueryTier::ProximityFull: return "proximity_full";
  }
  return "?";
}

std::vector<QueryFormulation> formulate_queries(const Medicine& medicine,
                                                const QueryInstance& query,
                                                const std::vector<std::string>& terms,
                                                std::string_view language_filter) {
  std::vector<QueryFormulation> out;
  std::vector<std::string> clean;
  for (const auto& t : terms) {
    auto s = phrase_safe(t);
    if (!s.empty()) clean.push_back(std::move(s));
  }
  if (!clean.empty()) {
    std::vector<std::string> clauses;
    for (const auto& t : clean) clauses.push_back("\"" + t + "\"[tiab]");
    out.push_back({QueryTier::ExactSentence, with_filter(join(clauses, " AND "), language_filter), terms});
    const auto near = fmt::format("\"{}\"[tiab:~{}] AND {}[ti]", join(clean, " "), kProximityWindow,
                                  phrase_safe(medicine.name));
    out.push_back({QueryTier::ProximityTerms, with_filter(near, language_filter), terms});
  }
  const auto full = fmt::format("\"{}\"[tiab:~{}]", phrase_safe(query.text), kProximityWindow);
  out.push_back({QueryTier::ProximityFull, with_filter(full, language_filter), terms});
  return out;
}

std::vector<std::string> merge_dedup(const std::vector<std::vector<std::string>>& results) {
  std::vector<std::string> out;
  std::set<std::string_view> seen;
  for (const auto& list : results) {
    for (const auto& pmid : list) {
      if (seen.insert(pmid).second) out.push_back(pmid);
    }
  }
  return out;
}

std::vector<FetchBatch> make_fetch_batches(const std::vector<std::string>& pmids,
                                           std::size_t batch_size) {
  if (batch_size == 0 || batch_size > kMaxFetchBatch) batch_size = kMaxFetchBatch;
  std::vector<FetchBatch> out;
  for (std::size_t i = 0; i < pmids.size(); i += batch_size) {
    const auto end = std::min(pmids.size(), i + batch_size);
    out.push_back(FetchBatch{{pmids.begin() + static_cast<std::ptrdiff_t>(i),
                              pmids.begin() + static_cast<std::ptrdiff_t>(end)},
                             0});
  }
  return out;
}

std::vector<std::string> parse_esearch_xml(std::string_view xml) {
  pt::ptree tree;
  try {
    tree = read_xml_string(xml);
  } catch (const pt::xml_parser_error& e) {
    throw ProtocolError(std::string("esearch: malformed XML: ") + e.what());
  }
  const auto* root = child(tree, "eSearchResult");
  if (root == nullptr) throw ProtocolError("esearch: response has no eSearchResult element");
  if (const auto* err = child(*root, "ERROR")) {
    throw ProtocolError("esearch: " + text_of(*err));
  }
  std::vector<std::string> ids;
  if (const auto* list = child(*root, "IdList")) {
    for (const auto& [key, node] : *list) {
      if (key == "Id") ids.emplace_back(trim(text_of(node)));
    }
  }
  return ids;
}

std::optional<int> parse_publication_year(std::string_view date) {
  for (std::size_t i = 0; i + 4 <= date.size(); ++i) {
    if (i > 0 && is_digit(date[i - 1])) continue;
    if (is_digit(date[i]) && is_digit(date[i + 1]) && is_digit(date[i + 2]) && is_digit(date[i + 3]) &&
        (i + 4 == date.size() || !is_digit(date[i + 4]))) {
      return std::stoi(std::string(date.substr(i, 4)));
    }
  }
  return std::nullopt;
}

std::vector<FetchedArticle> parse_efetch_xml(std::string_view xml,
                                             const std::vector<std::string>& batch) {
  pt::ptree tree;
  try {
    tree = read_xml_string(xml);
  } catch (const pt::xml_parser_error& e) {
    throw XmlParseError(std::string("efetch: malformed XML for batch of ") +
                            std::to_string(batch.size()) + " pmids: " + e.what(),
                        batch);
  }
  std::vector<FetchedArticle> out;
  const pt::ptree* root = child(tree, "PubmedArticleSet");
  if (root == nullptr) {
    // A single cached article is stored without the set wrapper.
    if (const auto* single = child(tree, "PubmedArticle")) out.push_back(parse_article(*single));
    return out;
  }
  for (const auto& [key, node] : *root) {
    if (key == "PubmedArticle") out.push_back(parse_article(node));
  }
  return out;
}

std::map<std::string, long long> parse_icite_json(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("icite: malformed JSON: ") + e.what());
  }
  std::map<std::string, long long> out;
  if (!j.contains("data") || !j["data"].is_array()) return out;
  for (const auto& rec : j["data"]) {
    if (!rec.contains("pmid")) continue;
    const auto& p = rec["pmid"];
    const std::string pmid = p.is_string() ? p.get<std::string>() : std::to_string(p.get<long long>());
    const auto& c = rec.value("citation_count", nlohmann::json());
    out[pmid] = c.is_number() ? std::max<long long>(0, c.get<long long>()) : 0;
  }
  return out;
}

PubMedClient::PubMedClient(PubMedConfig config)
    : config_(std::move(config)),
      limiter_(std::make_unique<RateLimiter>(config_.min_request_interval)),
      eutils_(config_.eutils_base, config_.retry, std::chrono::seconds{120}, limiter_.get()),
      icite_(config_.icite_base, config_.retry, std::chrono::seconds{60}) {
  if (config_.api_key.empty()) {
    if (const char* key = std::getenv("NCBI_API_KEY")) config_.api_key = key;
  }
}

std::filesystem::path PubMedClient::efetch_cache(const std::string& pmid) const {
  return config_.cache_dir / "efetch" / (pmid + ".xml");
}

std::filesystem::path PubMedClient::icite_cache(const std::string& pmid) const {
  return config_.cache_dir / "icite" / (pmid + ".json");
}

std::vector<std::string> PubMedClient::esearch(const QueryFormulation& formulation) const {
  Params params = {{"db", "pubmed"},
                   {"term", formulation.expression},
                   {"retmax", std::to_string(config_.retmax)},
                   {"retmode", "xml"}};
  if (!config_.api_key.empty()) params.emplace_back("api_key", config_.api_key);
  const auto res = eutils_.get("/esearch.fcgi", params);
  return parse_esearch_xml(res.body);
}

std::vector<Document> PubMedClient::efetch_abstracts(const std::vector<std::string>& pmids) const {
  const bool caching = !config_.cache_dir.empty();
  std::map<std::string, FetchedArticle> fetched;
  std::vector<std::string> missing;
  for (const auto& pmid : pmids) {
    if (caching && std::filesystem::exists(efetch_cache(pmid))) {
      const auto xml = read_file(efetch_cache(pmid));
      auto articles = parse_efetch_xml(xml, {pmid});
      if (!articles.empty()) fetched[pmid] = std::move(articles.front());
    } else {
      missing.push_back(pmid);
    }
  }

  const auto batches = make_fetch_batches(missing, config_.batch_size);
  std::mutex results_mu;
  parallel_for(batches.size(), config_.max_in_flight, [&](std::size_t b) {
    const auto& batch = batches[b];
    Params params = {{"db", "pubmed"}, {"id", join(batch.pmids, ",")}, {"retmode", "xml"},
                     {"rettype", "abstract"}};
    if (!config_.api_key.empty()) params.emplace_back("api_key", config_.api_key);
    ++efetch_requests_;
    const auto res = eutils_.post_form("/efetch.fcgi", params);
    auto articles = parse_efetch_xml(res.body, batch.pmids);
    std::lock_guard lock(results_mu);
    for (auto& a : articles) {
      if (a.pmid.empty()) continue;
      if (caching) {
        std::lock_guard cache_lock(cache_mu_);
        write_file(efetch_cache(a.pmid), a.xml);
      }
      fetched[a.pmid] = std::move(a);
    }
  });

  const auto citations = fetch_citations(pmids);
  std::vector<Document> docs;
  for (const auto& pmid : pmids) {
    const auto it = fetched.find(pmid);
    if (it == fetched.end()) continue;
    const auto& a = it->second;
    if (trim(a.abstract).empty() || !a.year) continue;
    try {
      const auto c = citations.find(pmid);
      docs.push_back(make_document(pmid, *a.year, c == citations.end() ? 0 : c->second, a.abstract));
    } catch (const IntegrityError&) {
      // Out-of-range years are dropped like abstract-less records.
    }
  }
  return docs;
}

std::map<std::string, long long> PubMedClient::fetch_citations(
    const std::vector<std::string>& pmids) const {
  const bool caching = !config_.cache_dir.empty();
  std::map<std::string, long long> out;
  std::vector<std::string> missing;
  for (const auto& pmid : pmids) {
    if (caching && std::filesystem::exists(icite_cache(pmid))) {
      const auto j = nlohmann::json::parse(read_file(icite_cache(pmid)), nullptr, false);
      if (!j.is_discarded() && j.contains("citation_count")) {
        out[pmid] = j["citation_count"].get<long long>();
        continue;
      }
    }
    missing.push_back(pmid);
  }
  for (const auto& batch : make_fetch_batches(missing, config_.batch_size)) {
    std::map<std::string, long long> counts;
    try {
      const auto res = icite_.get("/api/pubs", {{"pmids", join(batch.pmids, ",")}, {"format", "json"}});
      counts = parse_icite_json(res.body);
    } catch (const Error&) {
      for (const auto& pmid : batch.pmids) out[pmid] = 0;
      continue;
    }
    for (const auto& pmid : batch.pmids) {
      const auto it = counts.find(pmid);
      out[pmid] = it == counts.end() ? 0 : it->second;
      if (caching && it != counts.end()) {
        nlohmann::ordered_json j;
        j["pmid"] = pmid;
        j["citation_count"] = it->second;
        std::lock_guard lock(cache_mu_);
        write_file(icite_cache(pmid), j.dump());
      }
    }
  }
  return out;
}

Corpus ingest_corpus(const std::vector<Medicine>& medicines,
                     const std::map<std::string, std::string>& references,
                     const PubMedClient& client, const IngestOptions& options) {
  const PosTagger& tagger = options.tagger != nullptr ? *options.tagger : PosTagger::bundled();
  Corpus corpus;
  corpus.medicines = medicines;
  for (const auto& m : medicines) {
    for (Slot slot : kAllSlots) {
      QueryInstance q;
      q.medicine_id = m.id;
      q.slot = slot;
      q.text = question_for(slot, m.name);
      if (const auto it = references.find(q.id()); it != references.end()) {
        q.reference_answer = it->second;
      }
      const auto terms = extract_content_terms(q.text, options.exclusions, tagger);
      std::vector<std::vector<std::string>> hits;
      for (const auto& f : formulate_queries(m, q, terms, client.config().language_filter)) {
        hits.push_back(client.esearch(f));
        if (options.log != nullptr) {
          *options.log << q.id() << '\t' << tier_name(f.tier) << '\t' << hits.back().size() << '\t'
                       << f.expression << '\n';
        }
      }
      EvidencePool pool;
      pool.query_ref = q.id();
      pool.stage = PoolStage::Raw;
      pool.documents = client.efetch_abstracts(merge_dedup(hits));
      corpus.pools[q.id()] = std::move(pool);
      corpus.queries.push_back(std::move(q));
    }
  }
  corpus.validate();
  return corpus;
}

}  // namespace medrag
