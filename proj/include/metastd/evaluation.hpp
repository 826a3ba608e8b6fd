#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metastd/record.hpp"
#include "metastd/template.hpp"

namespace metastd {

enum class Verdict { kCorrect, kIncorrect };
enum class ScoreCause { kMatch, kMismatch, kMissingInPrediction, kHallucinated, kEmptyMatch };

std::string_view to_string(Verdict verdict);
std::string_view to_string(ScoreCause cause);

struct FieldScore {
  std::string field;
  FieldCategory category = FieldCategory::kNonOntologyConstrained;
  Verdict verdict = Verdict::kIncorrect;
  ScoreCause cause = ScoreCause::kMismatch;

  bool operator==(const FieldScore&) const = default;
};

// DOI values under https://doi.org/ and https://dx.doi.org/ reduce to the
// bare suffix; anything else is returned unchanged.
std::string_view doi_suffix(std::string_view value);

// Exact byte comparison, except DOI-typed fields where the two DOI resolver
// bases are interchangeable. `spec` may be null for fields outside the
// template. Throws ContractError when both sides are absent.
FieldScore score_field(std::string_view field, const std::optional<std::string>& gold,
                       const std::optional<std::string>& predicted, const FieldSpec* spec);

// One score per field in the union of gold and predicted names: gold order,
// then prediction-only fields in prediction order. Fields missing from the
// template count as non-ontology-constrained and are reported through
// `diagnostics` when given.
std::vector<FieldScore> score_record(const MetadataRecord& gold, const MetadataRecord& predicted,
                                     const TemplateSpec& spec,
                                     std::vector<std::string>* diagnostics = nullptr);

enum class ScoreCategory { kOntology = 0, kNonOntology = 1, kAll = 2 };
inline constexpr std::array<ScoreCategory, 3> kScoreCategories = {
    ScoreCategory::kOntology, ScoreCategory::kNonOntology, ScoreCategory::kAll};
std::string_view to_string(ScoreCategory category);

struct CategoryCounts {
  std::size_t correct = 0;
  std::size_t total = 0;

  // Absent for 0/0.
  std::optional<double> accuracy() const;
  bool operator==(const CategoryCounts&) const = default;
};

struct GroupStats {
  std::string group;
  std::size_t records = 0;
  std::array<CategoryCounts, 3> counts{};
  // Sample standard deviation of per-record accuracy; absent with fewer than
  // two records that have fields in the category.
  std::array<std::optional<double>, 3> record_stddev{};

  const CategoryCounts& operator[](ScoreCategory c) const {
    return counts[static_cast<std::size_t>(c)];
  }
  bool operator==(const GroupStats&) const = default;
};

struct EvaluationReport {
  // Sorted by group name.
  std::vector<GroupStats> groups;
  GroupStats pooled;

  const GroupStats* find(std::string_view group) const;
  bool operator==(const EvaluationReport&) const = default;
};

struct GroupedScore {
  std::string group;
  std::string record_id;
  FieldScore score;
};

// Field-pooled accuracy per group and over everything.
EvaluationReport aggregate(const std::vector<GroupedScore>& scores);

struct LabeledReport {
  std::string label;
  EvaluationReport report;

  bool operator==(const LabeledReport&) const = default;
};

enum class ReportFormat { kTableText, kStructured };

struct RenderOptions {
  std::string group_header = "Group";
  std::string pooled_label = "Overall Accuracy";
};

// Table: one row per group plus the pooled row; for each of the three
// categories one column per run; ratios to two decimals; tab separated.
// Structured: JSON that parse_report_json reads back.
std::string render_report(const std::vector<LabeledReport>& runs, ReportFormat format,
                          const RenderOptions& options = {});

std::vector<LabeledReport> parse_report_json(std::string_view text);

}  // namespace metastd
