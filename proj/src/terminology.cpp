#include "metastd/terminology.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>
#include <thread>

#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

using nlohmann::json;

std::string BioPortalBackend::request_target(const SearchQuery& query) {
  std::string target = "/search?q=" + text::percent_encode(query.query) +
                       "&ontologies=" + text::percent_encode(query.ontology);
  if (query.branch_iri) {
    target += "&subtree_root_id=" + text::percent_encode(*query.branch_iri);
  }
  target += "&pagesize=" + std::to_string(query.page_size) +
            "&include=prefLabel,synonym&display_links=true&display_context=false";
  return target;
}

std::string BioPortalBackend::fetch_search(const SearchQuery& query) {
  HttpRequest req;
  req.url = join_url(config_.endpoint, request_target(query));
  req.headers = {{"Authorization", "apikey token=" + config_.api_key},
                 {"Accept", "application/json"}};
  req.timeout = config_.timeout;
  return send_with_retry(transport_, req, retry_).body;
}

namespace {

std::vector<TermCandidate> parse_collection(const json& collection,
                                            std::string_view requested_acronym) {
  std::vector<TermCandidate> out;
  for (const auto& item : collection) {
    if (!item.is_object()) throw MalformedPayloadError("search result is not an object");
    TermCandidate c;
    c.preferred_label = item.value("prefLabel", "");
    c.concept_iri = item.value("@id", "");
    if (c.preferred_label.empty() || c.concept_iri.empty()) {
      throw MalformedPayloadError("search result without prefLabel or @id");
    }
    if (auto syn = item.find("synonym"); syn != item.end() && syn->is_array()) {
      for (const auto& s : *syn) {
        if (s.is_string()) c.synonyms.push_back(s.get<std::string>());
      }
    }
    std::string onto;
    if (auto links = item.find("links"); links != item.end() && links->is_object()) {
      onto = links->value("ontology", "");
    }
    if (auto slash = onto.rfind('/'); slash != std::string::npos) onto = onto.substr(slash + 1);
    c.ontology_acronym = onto.empty() ? std::string(requested_acronym) : onto;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

std::vector<TermCandidate> parse_search_payload(std::string_view payload,
                                                std::string_view requested_acronym) {
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::exception& e) {
    throw MalformedPayloadError(std::string("search payload is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("collection") || !doc["collection"].is_array()) {
    throw MalformedPayloadError("search payload has no collection array");
  }
  try {
    return parse_collection(doc["collection"], requested_acronym);
  } catch (const json::exception& e) {
    throw MalformedPayloadError(std::string("search result has the wrong shape: ") + e.what());
  }
}

MockTerminology::MockTerminology(const json& fixture) {
  if (!fixture.contains("ontologies") || !fixture["ontologies"].is_array()) {
    throw ParseError("mock fixture has no ontologies list");
  }
  for (const auto& onto : fixture["ontologies"]) {
    std::string acr = onto.at("acronym").get<std::string>();
    auto& terms = ontologies_[acr];
    auto& idx = index_[acr];
    for (const auto& t : onto.at("terms")) {
      Term term;
      term.iri = t.at("iri").get<std::string>();
      term.label = t.at("label").get<std::string>();
      if (term.iri.empty() || term.label.empty()) {
        throw ParseError("mock term in " + acr + " without iri or label");
      }
      if (auto s = t.find("synonyms"); s != t.end()) {
        term.synonyms = s->get<std::vector<std::string>>();
      }
      if (auto p = t.find("parent_iri"); p != t.end() && !p->is_null()) {
        if (p->is_array()) {
          term.parents = p->get<std::vector<std::string>>();
        } else {
          term.parents.push_back(p->get<std::string>());
        }
      }
      if (!idx.emplace(term.iri, terms.size()).second) {
        throw ParseError("mock term " + term.iri + " listed twice in " + acr);
      }
      terms.push_back(std::move(term));
    }
  }
  if (auto l = fixture.find("latency_ms"); l != fixture.end()) {
    latency_ = std::chrono::milliseconds(l->get<int>());
  }
  if (auto p = fixture.find("poison_queries"); p != fixture.end()) {
    poison_ = p->get<std::vector<std::string>>();
  }
}

bool MockTerminology::has_term(const std::string& acronym, const std::string& iri) const {
  auto it = index_.find(acronym);
  return it != index_.end() && it->second.contains(iri);
}

bool MockTerminology::in_branch(const std::string& acronym, const std::string& iri,
                                const std::string& branch_iri) const {
  auto idx = index_.find(acronym);
  if (idx == index_.end()) return false;
  const auto& terms = ontologies_.at(acronym);
  std::vector<std::string> frontier{iri};
  std::set<std::string> visited;
  while (!frontier.empty()) {
    std::string cur = std::move(frontier.back());
    frontier.pop_back();
    if (cur == branch_iri) return true;
    if (!visited.insert(cur).second) continue;
    auto at = idx->second.find(cur);
    if (at == idx->second.end()) continue;
    for (const auto& p : terms[at->second].parents) frontier.push_back(p);
  }
  return false;
}

std::vector<TermCandidate> MockTerminology::match(const SearchQuery& query) const {
  auto onto = ontologies_.find(query.ontology);
  if (onto == ontologies_.end()) return {};
  const std::string needle = text::normalize_for_match(query.query);
  if (needle.empty()) return {};

  std::vector<const Term*> exact;
  std::vector<const Term*> partial;
  for (const auto& term : onto->second) {
    if (query.branch_iri && !in_branch(query.ontology, term.iri, *query.branch_iri)) continue;
    std::string label = text::normalize_for_match(term.label);
    if (label == needle) {
      exact.push_back(&term);
      continue;
    }
    bool hit = label.find(needle) != std::string::npos;
    for (const auto& syn : term.synonyms) {
      if (hit) break;
      hit = text::normalize_for_match(syn).find(needle) != std::string::npos;
    }
    if (hit) partial.push_back(&term);
  }
  exact.insert(exact.end(), partial.begin(), partial.end());
  if (exact.size() > query.page_size) exact.resize(query.page_size);

  std::vector<TermCandidate> out;
  out.reserve(exact.size());
  for (const Term* t : exact) out.push_back({t->label, t->iri, query.ontology, t->synonyms});
  return out;
}

std::string MockTerminology::fetch_search(const SearchQuery& query) {
  ++requests_;
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  if (std::find(poison_.begin(), poison_.end(), query.query) != poison_.end()) {
    return "{\"collection\": [{\"prefLabel\": ";
  }
  if (query.branch_iri) {
    bool known = has_term(query.ontology, *query.branch_iri);
    if (!known) {
      spdlog::warn("mock terminology: unknown branch {} in {}; returning no candidates",
                   *query.branch_iri, query.ontology);
    }
  }
  json collection = json::array();
  for (const auto& c : match(query)) {
    json item = {{"prefLabel", c.preferred_label},
                 {"synonym", c.synonyms},
                 {"@id", c.concept_iri},
                 {"links", {{"ontology", "https://data.bioontology.org/ontologies/" +
                                             c.ontology_acronym}}}};
    collection.push_back(std::move(item));
  }
  json doc = {{"page", 1},
              {"pageCount", 1},
              {"totalCount", collection.size()},
              {"collection", std::move(collection)}};
  return doc.dump();
}

std::string TerminologyClient::ontology_key(const std::string& acronym, const std::string& query) {
  return text::canonical_key("term_search_from_ontology", {{"ontology", acronym}, {"query", query}});
}

std::string TerminologyClient::branch_key(const std::string& acronym,
                                          const std::string& branch_iri,
                                          const std::string& query) {
  return text::canonical_key("term_search_from_branch",
                             {{"branch_iri", branch_iri}, {"ontology", acronym}, {"query", query}});
}

SearchResult TerminologyClient::search_ontology(const std::string& acronym,
                                                const std::string& query) {
  if (acronym.empty()) throw ContractError("ontology acronym is empty");
  if (query.empty()) throw ContractError("search query is empty");
  SearchQuery q{acronym, std::nullopt, query};
  auto resp = cache_.cached_call(ontology_key(acronym, query),
                                 [&] { return backend_.fetch_search(q); });
  return {parse_search_payload(resp.payload, acronym), resp.from_cache};
}

SearchResult TerminologyClient::search_branch(const std::string& acronym,
                                              const std::string& branch_iri,
                                              const std::string& query) {
  if (acronym.empty()) throw ContractError("ontology acronym is empty");
  if (branch_iri.empty()) throw ContractError("branch identifier is empty");
  if (query.empty()) throw ContractError("search query is empty");
  SearchQuery q{acronym, branch_iri, query};
  auto resp = cache_.cached_call(branch_key(acronym, branch_iri, query),
                                 [&] { return backend_.fetch_search(q); });
  SearchResult result{parse_search_payload(resp.payload, acronym), resp.from_cache};
  if (result.candidates.empty()) {
    spdlog::debug("branch search {} / {} for '{}' returned no candidates", acronym, branch_iri,
                  query);
  }
  return result;
}

nlohmann::ordered_json candidate_to_json(const TermCandidate& c) {
  return {{"preferred_label", c.preferred_label},
          {"concept_iri", c.concept_iri},
          {"ontology", c.ontology_acronym},
          {"synonyms", c.synonyms}};
}

TermCandidate candidate_from_json(const nlohmann::ordered_json& j) {
  TermCandidate c;
  c.preferred_label = j.at("preferred_label").get<std::string>();
  c.concept_iri = j.at("concept_iri").get<std::string>();
  c.ontology_acronym = j.value("ontology", "");
  if (auto s = j.find("synonyms"); s != j.end()) c.synonyms = s->get<std::vector<std::string>>();
  return c;
}

}  // namespace metastd
