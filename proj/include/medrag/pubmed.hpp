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

#include <atomic>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medrag/corpus.hpp"
#include "medrag/http.hpp"
#include "medrag/pos_tagger.hpp"

namespace medrag {

enum class QueryTier { ExactSentence, ProximityTerms, ProximityFull };

std::string_view tier_name(QueryTier tier);

struct QueryFormulation {
  QueryTier tier = QueryTier::ProximityFull;
  std::string expression;
  std::vector<std::string> source_terms;
};

inline constexpr int kProximityWindow = 25;
inline constexpr std::size_t kMaxFetchBatch = 300;

/// Tier 1 ANDs one exact clause per term; tier 2 requires all terms within
/// 25 tokens plus the medicine name in the title; tier 3 applies the same
/// proximity operator to the whole question. With no terms only tier 3 is
/// produced. A non-empty `language_filter` is ANDed onto every expression.
std::vector<QueryFormulation> formulate_queries(const Medicine& medicine,
                                                const QueryInstance& query,
                                                const std::vector<std::string>& terms,
                                                std::string_view language_filter = "english[la]");

/// First-seen-order union of several pmid lists.
std::vector<std::string> merge_dedup(const std::vector<std::vector<std::string>>& results);

struct FetchBatch {
  std::vector<std::string> pmids;
  int attempt = 0;
};

std::vector<FetchBatch> make_fetch_batches(const std::vector<std::string>& pmids,
                                           std::size_t batch_size = kMaxFetchBatch);

/// Ids from an esearch XML payload. Throws ProtocolError on an error payload
/// or a document that is not an eSearchResult.
std::vector<std::string> parse_esearch_xml(std::string_view xml);

/// First four-digit run in a PubMed date string ("1998-1999" -> 1998).
std::optional<int> parse_publication_year(std::string_view date);

struct FetchedArticle {
  std::string pmid;
  std::optional<int> year;
  std::string abstract;  // empty when the record has none
  std::string xml;       // the <PubmedArticle> element, re-serialised for caching
};

/// Every PubmedArticle in an efetch payload. Throws XmlParseError carrying
/// `batch` when the payload is not well-formed.
std::vector<FetchedArticle> parse_efetch_xml(std::string_view xml,
                                             const std::vector<std::string>& batch);

/// pmid -> citation count from an iCite /api/pubs payload.
std::map<std::string, long long> parse_icite_json(std::string_view body);

struct PubMedConfig {
  std::string eutils_base = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
  std::string icite_base = "https://icite.od.nih.gov";
  std::string api_key;  // defaults to $NCBI_API_KEY
  std::string language_filter = "english[la]";
  int retmax = 10000;
  std::size_t batch_size = kMaxFetchBatch;
  std::size_t max_in_flight = 3;
  std::chrono::milliseconds min_request_interval{340};
  std::filesystem::path cache_dir;  // empty disables caching
  RetryPolicy retry;
};

/// E-utilities and iCite client. Fetched records are cached per pmid under
/// `<cache_dir>/efetch/<pmid>.xml` (citations under `icite/<pmid>.json`),
/// so a rerun only requests pmids it has never seen.
class PubMedClient {
 public:
  explicit PubMedClient(PubMedConfig config);

  std::vector<std::string> esearch(const QueryFormulation& formulation) const;

  /// Documents for pmids with an abstract and a publication year, in input
  /// order. Citation counts come from fetch_citations.
  std::vector<Document> efetch_abstracts(const std::vector<std::string>& pmids) const;

  /// Missing or unreachable counts default to zero.
  std::map<std::string, long long> fetch_citations(const std::vector<std::string>& pmids) const;

  std::size_t efetch_requests() const { return efetch_requests_; }
  const PubMedConfig& config() const { return config_; }

 private:
  std::filesystem::path efetch_cache(const std::string& pmid) const;
  std::filesystem::path icite_cache(const std::string& pmid) const;

  PubMedConfig config_;
  std::unique_ptr<RateLimiter> limiter_;
  HttpClient eutils_;
  HttpClient icite_;
  mutable std::atomic<std::size_t> efetch_requests_{0};
  mutable std::mutex cache_mu_;
};

struct IngestOptions {
  std::vector<std::string> exclusions;
  const PosTagger* tagger = nullptr;  // defaults to the bundled tagger
  std::ostream* log = nullptr;
};

/// Builds a raw corpus: six queries per medicine, three-tier search,
/// deduplicated fetch of abstracts, citation counts. `references` maps query
/// ids to pre-extracted reference answers.
Corpus ingest_corpus(const std::vector<Medicine>& medicines,
                     const std::map<std::string, std::string>& references,
                     const PubMedClient& client, const IngestOptions& options);

}  // namespace medrag
