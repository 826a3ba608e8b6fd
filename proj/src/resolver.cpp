#include "metastd/resolver.hpp"

#include <algorithm>
#include <charconv>
#include <regex>
#include <set>

#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

using nlohmann::ordered_json;

std::string_view to_string(ResolutionStatus status) {
  switch (status) {
    case ResolutionStatus::kUnchanged: return "unchanged";
    case ResolutionStatus::kNormalized: return "normalized";
    case ResolutionStatus::kOntologyResolved: return "ontology-resolved";
    case ResolutionStatus::kInferredFromRecord: return "inferred-from-record";
    case ResolutionStatus::kFlaggedForReview: return "flagged-for-review";
  }
  return "unchanged";
}

std::optional<ResolutionStatus> resolution_status_from_string(std::string_view s) {
  for (auto st : {ResolutionStatus::kUnchanged, ResolutionStatus::kNormalized,
                  ResolutionStatus::kOntologyResolved, ResolutionStatus::kInferredFromRecord,
                  ResolutionStatus::kFlaggedForReview}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

MetadataRecord CorrectionResult::to_record() const {
  MetadataRecord record(record_id);
  for (const auto& r : resolutions) record.add(r.field, r.value);
  for (const auto& r : extra_fields) record.add(r.field, r.value);
  return record;
}

std::vector<const Resolution*> CorrectionResult::flagged() const {
  std::vector<const Resolution*> out;
  for (const auto* list : {&resolutions, &extra_fields}) {
    for (const auto& r : *list) {
      if (r.status == ResolutionStatus::kFlaggedForReview) out.push_back(&r);
    }
  }
  return out;
}

namespace {

ordered_json resolution_json(const Resolution& r) {
  ordered_json j = {{"field", r.field}, {"value", r.value}, {"status", to_string(r.status)}};
  if (r.source_field) j["source_field"] = *r.source_field;
  if (r.note) j["note"] = *r.note;
  return j;
}

}  // namespace

ordered_json CorrectionResult::to_json() const {
  ordered_json res = ordered_json::array();
  for (const auto& r : resolutions) res.push_back(resolution_json(r));
  ordered_json extra = ordered_json::array();
  for (const auto& r : extra_fields) extra.push_back(resolution_json(r));
  return {{"record_id", record_id}, {"resolutions", res}, {"extra_fields", extra}};
}

ordered_json CorrectionResult::review_json() const {
  ordered_json flagged_fields = ordered_json::array();
  for (const Resolution* r : flagged()) {
    flagged_fields.push_back({{"field", r->field},
                              {"value", r->value},
                              {"note", r->note.value_or("")}});
  }
  ordered_json extra = ordered_json::array();
  for (const auto& r : extra_fields) extra.push_back(r.field);
  return {{"record_id", record_id}, {"flagged", flagged_fields}, {"extra_fields", extra}};
}

// ---------------------------------------------------------------------------
// Field mapping

namespace {

std::string loose_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    bool sep = c == '_' || c == '-' || c == '.' || c == ' ' || c == '\t';
    if (sep) {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
    }
  }
  if (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::set<std::string> name_tokens(std::string_view name) {
  std::set<std::string> tokens;
  for (auto& t : text::split(loose_name(name), '_')) {
    if (!t.empty()) tokens.insert(std::move(t));
  }
  return tokens;
}

}  // namespace

NameMatchTier name_match_tier(std::string_view template_field, std::string_view legacy_field) {
  if (template_field == legacy_field) return NameMatchTier::kExact;
  std::string a = loose_name(template_field);
  if (!a.empty() && a == loose_name(legacy_field)) return NameMatchTier::kLoose;
  auto ta = name_tokens(template_field);
  if (!ta.empty() && ta == name_tokens(legacy_field)) return NameMatchTier::kTokenSet;
  return NameMatchTier::kNone;
}

const MappedField* FieldMapping::find(std::string_view template_field) const {
  for (const auto& f : fields) {
    if (f.template_field == template_field) return &f;
  }
  return nullptr;
}

FieldMapping map_legacy_fields(const MetadataRecord& record, const TemplateSpec& spec) {
  const auto& tfields = spec.fields();
  const auto& lfields = record.fields();
  FieldMapping mapping;
  for (const auto& f : tfields) mapping.fields.push_back({f.name, std::nullopt, NameMatchTier::kNone});

  std::vector<std::vector<NameMatchTier>> tier(tfields.size(),
                                               std::vector<NameMatchTier>(lfields.size()));
  for (std::size_t i = 0; i < tfields.size(); ++i) {
    for (std::size_t j = 0; j < lfields.size(); ++j) {
      tier[i][j] = name_match_tier(tfields[i].name, lfields[j].name);
    }
  }

  std::vector<bool> settled(tfields.size(), false);
  std::vector<bool> used(lfields.size(), false);
  for (auto t : {NameMatchTier::kExact, NameMatchTier::kLoose, NameMatchTier::kTokenSet}) {
    std::vector<std::vector<std::size_t>> wants(tfields.size());
    std::vector<std::size_t> demand(lfields.size(), 0);
    for (std::size_t i = 0; i < tfields.size(); ++i) {
      if (settled[i]) continue;
      for (std::size_t j = 0; j < lfields.size(); ++j) {
        if (!used[j] && tier[i][j] == t) {
          wants[i].push_back(j);
          ++demand[j];
        }
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> assign;
    for (std::size_t i = 0; i < tfields.size(); ++i) {
      if (wants[i].empty()) continue;
      settled[i] = true;
      if (wants[i].size() == 1 && demand[wants[i][0]] == 1) {
        assign.emplace_back(i, wants[i][0]);
        continue;
      }
      std::string names;
      for (std::size_t j : wants[i]) names += (names.empty() ? "" : ", ") + lfields[j].name;
      mapping.diagnostics.push_back("template field '" + tfields[i].name +
                                    "': ambiguous legacy match (" + names + "); left unmapped");
    }
    for (auto [i, j] : assign) {
      used[j] = true;
      mapping.fields[i].legacy_field = lfields[j].name;
      mapping.fields[i].tier = t;
    }
  }
  for (std::size_t j = 0; j < lfields.size(); ++j) {
    if (!used[j]) {
      mapping.diagnostics.push_back("legacy field '" + lfields[j].name + "' has no template field");
    }
  }
  return mapping;
}

// ---------------------------------------------------------------------------
// Value normalization

namespace {

Resolution keep_or_normalize(const FieldSpec& spec, std::string_view raw, std::string value) {
  auto status = value == raw ? ResolutionStatus::kUnchanged : ResolutionStatus::kNormalized;
  return {spec.name, std::move(value), status, std::nullopt, std::nullopt};
}

Resolution flag(const FieldSpec& spec, std::string_view raw, std::string note) {
  return {spec.name, std::string(raw), ResolutionStatus::kFlaggedForReview, std::move(note),
          std::nullopt};
}

std::optional<std::string> boolean_yes_no(std::string_view v) {
  static const std::set<std::string, std::less<>> kYes = {"true", "1", "yes"};
  static const std::set<std::string, std::less<>> kNo = {"false", "0", "no"};
  std::string folded = text::fold_case(v);
  if (kYes.contains(folded)) return "Yes";
  if (kNo.contains(folded)) return "No";
  return std::nullopt;
}

bool is_integer(std::string_view v) {
  static const std::regex re(R"([+-]?[0-9]+)");
  return std::regex_match(v.begin(), v.end(), re);
}

bool is_decimal(std::string_view v) {
  static const std::regex re(R"([+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)([eE][+-]?[0-9]+)?)");
  return std::regex_match(v.begin(), v.end(), re);
}

bool valid_ymd(int y, int m, int d) {
  static constexpr int kDays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (y < 1 || m < 1 || m > 12 || d < 1 || d > kDays[m - 1]) return false;
  if (m == 2 && d == 29) return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return true;
}

std::optional<std::string> iso_date(std::string_view v) {
  static const std::regex re(R"(([0-9]{4})[-/]([0-9]{1,2})[-/]([0-9]{1,2}))");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(v.begin(), v.end(), m, re)) return std::nullopt;
  int y = std::stoi(m[1].str()), mo = std::stoi(m[2].str()), d = std::stoi(m[3].str());
  if (!valid_ymd(y, mo, d)) return std::nullopt;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, mo, d);
  return std::string(buf);
}

std::optional<std::string> doi_url(std::string_view v) {
  for (std::string_view base : {"https://doi.org/", "https://dx.doi.org/", "http://doi.org/",
                                "http://dx.doi.org/"}) {
    if (text::starts_with_icase(v, base) && v.size() > base.size()) return std::string(v);
  }
  std::string_view bare = v;
  if (text::starts_with_icase(bare, "doi:")) bare = text::trim(bare.substr(4));
  if (bare.starts_with("10.") && bare.find('/') != std::string_view::npos &&
      bare.find_first_of(" \t") == std::string_view::npos) {
    return "https://doi.org/" + std::string(bare);
  }
  return std::nullopt;
}

Resolution normalize_enum(const FieldSpec& spec, std::string_view raw, const EnumLiterals& e) {
  std::string_view trimmed = text::trim(raw);
  for (const auto& lit : e.permitted) {
    if (lit == trimmed) return keep_or_normalize(spec, raw, lit);
  }
  std::string wanted = text::normalize_for_match(trimmed);
  const std::string* hit = nullptr;
  for (const auto& lit : e.permitted) {
    if (text::normalize_for_match(lit) == wanted) {
      if (hit) return flag(spec, raw, "matches more than one permitted value");
      hit = &lit;
    }
  }
  if (hit) return keep_or_normalize(spec, raw, *hit);
  bool yes_no = std::find(e.permitted.begin(), e.permitted.end(), "Yes") != e.permitted.end() &&
                std::find(e.permitted.begin(), e.permitted.end(), "No") != e.permitted.end();
  if (yes_no) {
    if (auto b = boolean_yes_no(trimmed)) return keep_or_normalize(spec, raw, *b);
  }
  return flag(spec, raw, "not a permitted value");
}

}  // namespace

Resolution normalize_value(const FieldSpec& spec, std::string_view raw) {
  if (spec.ontology()) throw ContractError("normalize_value on ontology-bound field " + spec.name);
  std::string_view trimmed = text::trim(raw);
  if (trimmed.empty()) return keep_or_normalize(spec, raw, "");

  if (const auto* e = std::get_if<EnumLiterals>(&spec.constraint)) {
    return normalize_enum(spec, raw, *e);
  }
  if (const auto* p = std::get_if<Pattern>(&spec.constraint)) {
    if (p->full_match(raw)) return keep_or_normalize(spec, raw, std::string(raw));
    if (p->full_match(trimmed)) return keep_or_normalize(spec, raw, std::string(trimmed));
    return flag(spec, raw, "does not match pattern " + p->regex());
  }
  switch (std::get<Typed>(spec.constraint).kind) {
    case TypedKind::kFreeText:
      return keep_or_normalize(spec, raw, std::string(trimmed));
    case TypedKind::kInteger:
      if (is_integer(trimmed)) return keep_or_normalize(spec, raw, std::string(trimmed));
      return flag(spec, raw, "not an integer");
    case TypedKind::kDecimal:
      if (is_decimal(trimmed)) return keep_or_normalize(spec, raw, std::string(trimmed));
      return flag(spec, raw, "not a decimal number");
    case TypedKind::kBooleanYesNo:
      if (auto b = boolean_yes_no(trimmed)) return keep_or_normalize(spec, raw, *b);
      return flag(spec, raw, "not a yes/no value");
    case TypedKind::kDoiUrl:
      if (auto d = doi_url(trimmed)) return keep_or_normalize(spec, raw, *d);
      return flag(spec, raw, "not a DOI");
    case TypedKind::kDate:
      if (auto d = iso_date(trimmed)) return keep_or_normalize(spec, raw, *d);
      return flag(spec, raw, "not a YYYY-MM-DD date");
  }
  return flag(spec, raw, "unsupported type");
}

// ---------------------------------------------------------------------------
// Candidate ranking

namespace {

std::set<std::string> word_set(const std::string& normalized) {
  std::set<std::string> out;
  for (auto& w : text::split(normalized, ' ')) {
    if (!w.empty()) out.insert(std::move(w));
  }
  return out;
}

}  // namespace

int candidate_score(std::string_view raw, const TermCandidate& candidate) {
  std::string q = text::normalize_for_match(raw);
  if (q.empty()) return 0;
  std::string label = text::normalize_for_match(candidate.preferred_label);
  if (label == q) return 4;
  for (const auto& syn : candidate.synonyms) {
    if (text::normalize_for_match(syn) == q) return 3;
  }
  if (word_set(label) == word_set(q)) return 2;
  if (!label.empty() &&
      (label.find(q) != std::string::npos || q.find(label) != std::string::npos)) {
    return 1;
  }
  return 0;
}

RankOutcome rank_candidates(std::string_view raw, const std::vector<TermCandidate>& candidates) {
  RankOutcome out;
  const TermCandidate* best = nullptr;
  bool tie = false;
  for (const auto& c : candidates) {
    int s = candidate_score(raw, c);
    if (s == 0) continue;
    if (s > out.score) {
      out.score = s;
      best = &c;
      tie = false;
    } else if (s == out.score && c.concept_iri != best->concept_iri) {
      tie = true;
    }
  }
  if (!best) return out;
  if (tie) {
    out.kind = RankOutcome::Kind::kTie;
    return out;
  }
  out.kind = RankOutcome::Kind::kSelected;
  out.selected = *best;
  return out;
}

Resolution resolve_ontology_value(const FieldSpec& spec, std::string_view raw, TermSearch& terms,
                                  ResolutionTrace* trace) {
  const OntologyBinding* binding = spec.ontology();
  if (!binding) throw ContractError("resolve_ontology_value on unbound field " + spec.name);
  Resolution res{spec.name, "", ResolutionStatus::kUnchanged, std::nullopt, std::nullopt};
  std::string query(text::trim(raw));
  if (query.empty()) {
    if (!raw.empty()) res.status = ResolutionStatus::kNormalized;
    return res;
  }

  std::vector<TermCandidate> candidates;
  try {
    SearchResult found = binding->branch_iri
                             ? terms.search_branch(binding->acronym, *binding->branch_iri, query)
                             : terms.search_ontology(binding->acronym, query);
    candidates = std::move(found.candidates);
    if (trace) {
      trace->searched = true;
      trace->from_cache = found.from_cache;
      trace->candidates = candidates;
    }
  } catch (const Error& e) {
    res.value = std::string(raw);
    res.status = ResolutionStatus::kFlaggedForReview;
    res.note = std::string("terminology lookup failed: ") + e.what();
    return res;
  }
  for (const auto& lit : binding->extra_literals) {
    candidates.push_back({lit, "literal:" + lit, binding->acronym, {}});
  }

  RankOutcome ranked = rank_candidates(raw, candidates);
  switch (ranked.kind) {
    case RankOutcome::Kind::kSelected:
      res.value = ranked.selected->preferred_label;
      res.status = res.value == raw ? ResolutionStatus::kUnchanged
                                    : ResolutionStatus::kOntologyResolved;
      res.note = "matched " + ranked.selected->concept_iri + " (tier " +
                 std::to_string(ranked.score) + ")";
      return res;
    case RankOutcome::Kind::kTie:
      res.value = std::string(raw);
      res.status = ResolutionStatus::kFlaggedForReview;
      res.note = "tied candidates at tier " + std::to_string(ranked.score);
      return res;
    case RankOutcome::Kind::kNone:
      break;
  }
  res.value = std::string(raw);
  res.status = ResolutionStatus::kFlaggedForReview;
  res.note = candidates.empty() ? "no candidates returned" : "no candidate matches the value";
  return res;
}

CorrectionResult standardize_record(const MetadataRecord& record, const TemplateSpec& spec,
                                    TermSearch& terms) {
  CorrectionResult result;
  result.record_id = record.id();
  FieldMapping mapping = map_legacy_fields(record, spec);
  for (std::size_t i = 0; i < spec.fields().size(); ++i) {
    const FieldSpec& field = spec.fields()[i];
    const MappedField& mapped = mapping.fields[i];
    if (!mapped.legacy_field) {
      result.resolutions.push_back({field.name, "", ResolutionStatus::kUnchanged,
                                    "no legacy field mapped", std::nullopt});
      continue;
    }
    const std::string& raw = *record.find(*mapped.legacy_field);
    Resolution r = field.ontology() ? resolve_ontology_value(field, raw, terms)
                                    : normalize_value(field, raw);
    r.source_field = *mapped.legacy_field;
    if (*mapped.legacy_field != field.name) {
      std::string moved = "value taken from legacy field '" + *mapped.legacy_field + "'";
      r.note = r.note ? *r.note + "; " + moved : moved;
    }
    result.resolutions.push_back(std::move(r));
  }
  return result;
}

}  // namespace metastd
