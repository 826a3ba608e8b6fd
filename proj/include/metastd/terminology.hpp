#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metastd/cache.hpp"
#include "metastd/http.hpp"

namespace metastd {

struct TermCandidate {
  std::string preferred_label;
  std::string concept_iri;
  std::string ontology_acronym;
  std::vector<std::string> synonyms;

  bool operator==(const TermCandidate&) const = default;
};

struct SearchResult {
  std::vector<TermCandidate> candidates;
  bool from_cache = false;
};

// Terminology lookups as the resolver and tool server see them.
class TermSearch {
 public:
  virtual ~TermSearch() = default;
  virtual SearchResult search_ontology(const std::string& acronym, const std::string& query) = 0;
  virtual SearchResult search_branch(const std::string& acronym, const std::string& branch_iri,
                                     const std::string& query) = 0;
};

struct SearchQuery {
  std::string ontology;
  std::optional<std::string> branch_iri;
  std::string query;
  std::size_t page_size = 50;
};

// Produces raw search payloads in the BioPortal /search response shape.
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual std::string fetch_search(const SearchQuery& query) = 0;
};

struct BioPortalConfig {
  std::string endpoint = "https://data.bioontology.org";
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
};

class BioPortalBackend : public SearchBackend {
 public:
  BioPortalBackend(BioPortalConfig config, HttpTransport& transport, RetryPolicy retry = {})
      : config_(std::move(config)), transport_(transport), retry_(std::move(retry)) {}

  std::string fetch_search(const SearchQuery& query) override;
  // Path and query string the request uses; exposed for tests.
  static std::string request_target(const SearchQuery& query);

 private:
  BioPortalConfig config_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

// Parses a BioPortal search payload. The acronym of each candidate comes from
// links.ontology, falling back to `requested_acronym`.
// Throws MalformedPayloadError.
std::vector<TermCandidate> parse_search_payload(std::string_view payload,
                                                std::string_view requested_acronym);

// Recorded-fixture terminology service. Matching is case- and whitespace-insensitive
// substring over label and synonyms with exact-label matches first, then
// fixture order. Branch membership is the reflexive-transitive closure over
// parent_iri.
class MockTerminology : public SearchBackend {
 public:
  struct Term {
    std::string iri;
    std::string label;
    std::vector<std::string> synonyms;
    std::vector<std::string> parents;
  };

  // Fixture document: {"ontologies": [{"acronym", "terms": [{iri, label,
  // synonyms[], parent_iri}]}]}. Optional "latency_ms" simulates upstream
  // delay; optional "poison_queries" lists queries answered with a malformed
  // payload.
  explicit MockTerminology(const nlohmann::json& fixture);

  std::string fetch_search(const SearchQuery& query) override;

  // Direct scan of the fixture, no payload round trip.
  std::vector<TermCandidate> match(const SearchQuery& query) const;
  bool in_branch(const std::string& acronym, const std::string& iri,
                 const std::string& branch_iri) const;
  bool has_term(const std::string& acronym, const std::string& iri) const;

  std::size_t requests() const noexcept { return requests_.load(); }

 private:
  std::map<std::string, std::vector<Term>> ontologies_;
  std::map<std::string, std::map<std::string, std::size_t>> index_;
  std::vector<std::string> poison_;
  std::chrono::milliseconds latency_{0};
  std::atomic<std::size_t> requests_{0};
};

// Cached terminology access over any search backend.
class TerminologyClient : public TermSearch {
 public:
  TerminologyClient(SearchBackend& backend, ResponseCache& cache)
      : backend_(backend), cache_(cache) {}

  SearchResult search_ontology(const std::string& acronym, const std::string& query) override;
  SearchResult search_branch(const std::string& acronym, const std::string& branch_iri,
                             const std::string& query) override;

  static std::string ontology_key(const std::string& acronym, const std::string& query);
  static std::string branch_key(const std::string& acronym, const std::string& branch_iri,
                                const std::string& query);

 private:
  SearchBackend& backend_;
  ResponseCache& cache_;
};

nlohmann::ordered_json candidate_to_json(const TermCandidate& c);
TermCandidate candidate_from_json(const nlohmann::ordered_json& j);

}  // namespace metastd
