#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metastd/record.hpp"
#include "metastd/template.hpp"
#include "metastd/terminology.hpp"

namespace metastd {

enum class ResolutionStatus {
  kUnchanged,
  kNormalized,
  kOntologyResolved,
  kInferredFromRecord,
  kFlaggedForReview,
};

std::string_view to_string(ResolutionStatus status);
std::optional<ResolutionStatus> resolution_status_from_string(std::string_view s);

// Outcome for one output field. A flagged resolution always carries the
// legacy value verbatim.
struct Resolution {
  std::string field;
  std::string value;
  ResolutionStatus status = ResolutionStatus::kUnchanged;
  std::optional<std::string> note;
  // Legacy field the value came from, when one was mapped.
  std::optional<std::string> source_field;

  bool operator==(const Resolution&) const = default;
};

struct CorrectionResult {
  std::string record_id;
  // One entry per template field, in template order.
  std::vector<Resolution> resolutions;
  // Output fields the template does not declare (agent output only).
  std::vector<Resolution> extra_fields;

  MetadataRecord to_record() const;
  std::vector<const Resolution*> flagged() const;
  nlohmann::ordered_json to_json() const;
  // Sidecar listing flagged fields with their diagnostics.
  nlohmann::ordered_json review_json() const;

  bool operator==(const CorrectionResult&) const = default;
};

enum class NameMatchTier { kNone = 0, kTokenSet = 1, kLoose = 2, kExact = 3 };

// exact > case/separator-insensitive > same token set > none.
NameMatchTier name_match_tier(std::string_view template_field, std::string_view legacy_field);

struct MappedField {
  std::string template_field;
  std::optional<std::string> legacy_field;
  NameMatchTier tier = NameMatchTier::kNone;
};

struct FieldMapping {
  // Parallel to the template's field list.
  std::vector<MappedField> fields;
  std::vector<std::string> diagnostics;

  const MappedField* find(std::string_view template_field) const;
};

// Greedy by tier, strongest first. At each tier a template field is assigned
// only when it has one unused candidate that no other open field also wants;
// any ambiguity leaves the field unmapped with a diagnostic.
FieldMapping map_legacy_fields(const MetadataRecord& record, const TemplateSpec& spec);

// Format correction for fields without an ontology binding. Never throws for
// bad values; they come back flagged with the raw value untouched.
Resolution normalize_value(const FieldSpec& spec, std::string_view raw);

struct RankOutcome {
  enum class Kind { kSelected, kTie, kNone };
  Kind kind = Kind::kNone;
  std::optional<TermCandidate> selected;
  int score = 0;
};

// Tier score of one candidate for `raw` on case-folded, whitespace-collapsed
// text: exact label 4, exact synonym 3, same label token set 2, substring
// either way 1, else 0.
int candidate_score(std::string_view raw, const TermCandidate& candidate);

// Highest score wins; equal top scores on different concepts are a tie.
RankOutcome rank_candidates(std::string_view raw, const std::vector<TermCandidate>& candidates);

struct ResolutionTrace {
  // Every candidate the terminology call returned.
  std::vector<TermCandidate> candidates;
  bool searched = false;
  bool from_cache = false;
};

Resolution resolve_ontology_value(const FieldSpec& spec, std::string_view raw, TermSearch& terms,
                                  ResolutionTrace* trace = nullptr);

CorrectionResult standardize_record(const MetadataRecord& record, const TemplateSpec& spec,
                                    TermSearch& terms);

}  // namespace metastd
