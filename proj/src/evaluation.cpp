#include "metastd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "metastd/errors.hpp"

namespace metastd {

using nlohmann::ordered_json;

std::string_view to_string(Verdict verdict) {
  return verdict == Verdict::kCorrect ? "correct" : "incorrect";
}

std::string_view to_string(ScoreCause cause) {
  switch (cause) {
    case ScoreCause::kMatch: return "match";
    case ScoreCause::kMismatch: return "mismatch";
    case ScoreCause::kMissingInPrediction: return "missing-in-prediction";
    case ScoreCause::kHallucinated: return "hallucinated";
    case ScoreCause::kEmptyMatch: return "empty-match";
  }
  return "mismatch";
}

std::string_view to_string(ScoreCategory category) {
  switch (category) {
    case ScoreCategory::kOntology: return "ontology_constrained";
    case ScoreCategory::kNonOntology: return "non_ontology_constrained";
    case ScoreCategory::kAll: return "all_fields";
  }
  return "all_fields";
}

std::string_view doi_suffix(std::string_view value) {
  for (std::string_view base : {"https://doi.org/", "https://dx.doi.org/"}) {
    if (value.starts_with(base)) return value.substr(base.size());
  }
  return value;
}

FieldScore score_field(std::string_view field, const std::optional<std::string>& gold,
                       const std::optional<std::string>& predicted, const FieldSpec* spec) {
  if (!gold && !predicted) {
    throw ContractError("score_field: '" + std::string(field) + "' absent on both sides");
  }
  FieldScore s;
  s.field = std::string(field);
  s.category = spec ? classify_field(*spec) : FieldCategory::kNonOntologyConstrained;
  if (!predicted) {
    s.cause = ScoreCause::kMissingInPrediction;
  } else if (!gold) {
    s.cause = ScoreCause::kHallucinated;
  } else if (gold->empty() && predicted->empty()) {
    s.cause = ScoreCause::kEmptyMatch;
  } else {
    bool doi = spec && std::holds_alternative<Typed>(spec->constraint) &&
               std::get<Typed>(spec->constraint).kind == TypedKind::kDoiUrl;
    bool equal = doi ? (doi_suffix(*gold) == doi_suffix(*predicted) &&
                        (doi_suffix(*gold).size() != gold->size()) ==
                            (doi_suffix(*predicted).size() != predicted->size()))
                     : *gold == *predicted;
    s.cause = equal ? ScoreCause::kMatch : ScoreCause::kMismatch;
  }
  s.verdict = (s.cause == ScoreCause::kMatch || s.cause == ScoreCause::kEmptyMatch)
                  ? Verdict::kCorrect
                  : Verdict::kIncorrect;
  return s;
}

std::vector<FieldScore> score_record(const MetadataRecord& gold, const MetadataRecord& predicted,
                                     const TemplateSpec& spec,
                                     std::vector<std::string>* diagnostics) {
  std::vector<std::string> names;
  for (const auto& f : gold.fields()) names.push_back(f.name);
  for (const auto& f : predicted.fields()) {
    if (!gold.contains(f.name)) names.push_back(f.name);
  }
  std::vector<FieldScore> scores;
  scores.reserve(names.size());
  for (const auto& name : names) {
    const FieldSpec* fs = spec.find(name);
    if (!fs && diagnostics) {
      diagnostics->push_back("record " + gold.id() + ": field '" + name +
                             "' not in template; scored as non-ontology-constrained");
    }
    auto opt = [](const std::string* v) {
      return v ? std::optional<std::string>(*v) : std::nullopt;
    };
    scores.push_back(score_field(name, opt(gold.find(name)), opt(predicted.find(name)), fs));
  }
  return scores;
}

std::optional<double> CategoryCounts::accuracy() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

const GroupStats* EvaluationReport::find(std::string_view group) const {
  for (const auto& g : groups) {
    if (g.group == group) return &g;
  }
  return nullptr;
}

namespace {

struct RecordTally {
  std::array<CategoryCounts, 3> counts{};
};

void add(std::array<CategoryCounts, 3>& counts, const FieldScore& s) {
  auto cat = s.category == FieldCategory::kOntologyConstrained ? ScoreCategory::kOntology
                                                               : ScoreCategory::kNonOntology;
  bool ok = s.verdict == Verdict::kCorrect;
  for (auto c : {cat, ScoreCategory::kAll}) {
    auto& cc = counts[static_cast<std::size_t>(c)];
    ++cc.total;
    if (ok) ++cc.correct;
  }
}

GroupStats summarize(std::string name, const std::map<std::string, RecordTally>& records) {
  GroupStats g;
  g.group = std::move(name);
  g.records = records.size();
  for (const auto& [id, tally] : records) {
    for (std::size_t c = 0; c < 3; ++c) {
      g.counts[c].correct += tally.counts[c].correct;
      g.counts[c].total += tally.counts[c].total;
    }
  }
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> acc;
    for (const auto& [id, tally] : records) {
      if (auto a = tally.counts[c].accuracy()) acc.push_back(*a);
    }
    if (acc.size() < 2) continue;
    std::sort(acc.begin(), acc.end());
    double mean = 0;
    for (double a : acc) mean += a;
    mean /= static_cast<double>(acc.size());
    double ss = 0;
    for (double a : acc) ss += (a - mean) * (a - mean);
    g.record_stddev[c] = std::sqrt(ss / static_cast<double>(acc.size() - 1));
  }
  return g;
}

}  // namespace

EvaluationReport aggregate(const std::vector<GroupedScore>& scores) {
  std::map<std::string, std::map<std::string, RecordTally>> by_group;
  std::map<std::string, RecordTally> pooled;
  for (const auto& gs : scores) {
    add(by_group[gs.group][gs.record_id].counts, gs.score);
    // Record ids may repeat across groups; keep them distinct in the pool.
    add(pooled[gs.group + '\x1f' + gs.record_id].counts, gs.score);
  }
  EvaluationReport report;
  for (const auto& [group, records] : by_group) report.groups.push_back(summarize(group, records));
  report.pooled = summarize("", pooled);
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string fixed2(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

std::string_view category_title(ScoreCategory c) {
  switch (c) {
    case ScoreCategory::kOntology: return "Ontology-Constrained Field Accuracy";
    case ScoreCategory::kNonOntology: return "Non-Ontology-Constrained Field Accuracy";
    case ScoreCategory::kAll: return "All Field Accuracy";
  }
  return "";
}

ordered_json counts_json(const CategoryCounts& cc, const std::optional<double>& sd) {
  ordered_json j = {{"correct", cc.correct}, {"total", cc.total}};
  j["accuracy"] = cc.accuracy() ? ordered_json(*cc.accuracy()) : ordered_json(nullptr);
  j["record_stddev"] = sd ? ordered_json(*sd) : ordered_json(nullptr);
  return j;
}

ordered_json group_json(const GroupStats& g) {
  ordered_json j = {{"group", g.group}, {"records", g.records}};
  for (auto c : kScoreCategories) {
    auto i = static_cast<std::size_t>(c);
    j[std::string(to_string(c))] = counts_json(g.counts[i], g.record_stddev[i]);
  }
  return j;
}

GroupStats group_from_json(const ordered_json& j) {
  GroupStats g;
  g.group = j.at("group").get<std::string>();
  g.records = j.at("records").get<std::size_t>();
  for (auto c : kScoreCategories) {
    auto i = static_cast<std::size_t>(c);
    const auto& cj = j.at(std::string(to_string(c)));
    g.counts[i].correct = cj.at("correct").get<std::size_t>();
    g.counts[i].total = cj.at("total").get<std::size_t>();
    if (!cj.at("record_stddev").is_null()) g.record_stddev[i] = cj["record_stddev"].get<double>();
  }
  return g;
}

std::string render_table(const std::vector<LabeledReport>& runs, const RenderOptions& options) {
  std::set<std::string> names;
  for (const auto& r : runs) {
    for (const auto& g : r.report.groups) names.insert(g.group);
  }
  std::string out = options.group_header + "\tNumber of records";
  for (auto c : kScoreCategories) {
    out += "\t" + std::string(category_title(c));
    for (std::size_t k = 1; k < runs.size(); ++k) out += "\t";
  }
  out += "\n\t";
  for (std::size_t c = 0; c < kScoreCategories.size(); ++c) {
    for (const auto& r : runs) out += "\t" + r.label;
  }
  out += "\n";

  auto row = [&](const std::string& label, auto&& stats_of) {
    std::size_t records = 0;
    for (const auto& r : runs) {
      if (const GroupStats* g = stats_of(r.report)) {
        records = g->records;
        break;
      }
    }
    out += label + "\t" + std::to_string(records);
    for (auto c : kScoreCategories) {
      for (const auto& r : runs) {
        const GroupStats* g = stats_of(r.report);
        out += "\t" + fixed2(g ? (*g)[c].accuracy() : std::nullopt);
      }
    }
    out += "\n";
  };
  for (const auto& name : names) {
    row(name, [&name](const EvaluationReport& rep) { return rep.find(name); });
  }
  row(options.pooled_label, [](const EvaluationReport& rep) { return &rep.pooled; });
  return out;
}

}  // namespace

std::string render_report(const std::vector<LabeledReport>& runs, ReportFormat format,
                          const RenderOptions& options) {
  if (format == ReportFormat::kTableText) return render_table(runs, options);
  ordered_json doc = {{"runs", ordered_json::array()}};
  for (const auto& r : runs) {
    ordered_json groups = ordered_json::array();
    for (const auto& g : r.report.groups) groups.push_back(group_json(g));
    doc["runs"].push_back(
        {{"label", r.label}, {"groups", std::move(groups)}, {"pooled", group_json(r.report.pooled)}});
  }
  return doc.dump(2) + "\n";
}

std::vector<LabeledReport> parse_report_json(std::string_view text) {
  try {
    auto doc = ordered_json::parse(text);
    std::vector<LabeledReport> runs;
    for (const auto& r : doc.at("runs")) {
      LabeledReport lr;
      lr.label = r.at("label").get<std::string>();
      for (const auto& g : r.at("groups")) lr.report.groups.push_back(group_from_json(g));
      lr.report.pooled = group_from_json(r.at("pooled"));
      runs.push_back(std::move(lr));
    }
    return runs;
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace metastd
