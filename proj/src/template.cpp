#include "metastd/template.hpp"

#include <set>

#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

using nlohmann::ordered_json;

Pattern::Pattern(std::string regex) : source_(std::move(regex)) {
  try {
    compiled_ = std::make_shared<const std::regex>(source_, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw ParseError("pattern '" + source_ + "' does not compile: " + e.what());
  }
}

bool Pattern::full_match(std::string_view value) const {
  return std::regex_match(value.begin(), value.end(), *compiled_);
}

std::string_view to_string(TypedKind kind) {
  switch (kind) {
    case TypedKind::kFreeText: return "free-text";
    case TypedKind::kInteger: return "integer";
    case TypedKind::kDecimal: return "decimal";
    case TypedKind::kBooleanYesNo: return "boolean-yes-no";
    case TypedKind::kDoiUrl: return "doi-url";
    case TypedKind::kDate: return "date";
  }
  return "free-text";
}

std::optional<TypedKind> typed_kind_from_string(std::string_view s) {
  for (auto k : {TypedKind::kFreeText, TypedKind::kInteger, TypedKind::kDecimal,
                 TypedKind::kBooleanYesNo, TypedKind::kDoiUrl, TypedKind::kDate}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::string_view to_string(FieldCategory category) {
  return category == FieldCategory::kOntologyConstrained ? "ontology-constrained"
                                                         : "non-ontology-constrained";
}

FieldCategory classify_field(const FieldSpec& field) {
  return std::holds_alternative<OntologyBinding>(field.constraint)
             ? FieldCategory::kOntologyConstrained
             : FieldCategory::kNonOntologyConstrained;
}

TemplateSpec::TemplateSpec(std::string template_id, std::vector<FieldSpec> fields)
    : id_(std::move(template_id)), fields_(std::move(fields)) {
  std::set<std::string_view> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw ParseError("template field with empty name");
    if (!seen.insert(f.name).second) {
      throw ParseError("duplicate template field '" + f.name + "'");
    }
  }
}

const FieldSpec* TemplateSpec::find(std::string_view name) const {
  for (const auto& f : fields_) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

namespace {

std::string string_or(const ordered_json& obj, const char* key, std::string fallback = "") {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return fallback;
  return it->get<std::string>();
}

std::vector<std::string> unique_strings(const ordered_json& arr, const std::string& field) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError("field '" + field + "': enum values must be strings");
    auto s = v.get<std::string>();
    if (!seen.insert(s).second) {
      throw ParseError("field '" + field + "': duplicate enum value '" + s + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

FieldSpec parse_internal_field(const ordered_json& f) {
  if (!f.is_object()) throw ParseError("template field entry is not an object");
  FieldSpec spec;
  spec.name = string_or(f, "name");
  if (spec.name.empty()) throw ParseError("template field without a name");
  spec.description = string_or(f, "description");
  if (auto it = f.find("required"); it != f.end()) {
    if (!it->is_boolean()) throw ParseError("field '" + spec.name + "': required must be boolean");
    spec.required = it->get<bool>();
  }

  int shapes = 0;
  for (const char* k : {"ontology", "enum", "pattern", "type"}) shapes += f.contains(k) ? 1 : 0;
  if (shapes != 1) {
    throw ParseError("field '" + spec.name +
                     "': unrecognized constraint shape (need exactly one of "
                     "ontology, enum, pattern, type)");
  }

  if (auto it = f.find("ontology"); it != f.end()) {
    if (!it->is_object()) throw ParseError("field '" + spec.name + "': ontology must be an object");
    OntologyBinding b;
    b.acronym = string_or(*it, "acronym");
    if (b.acronym.empty()) {
      throw ParseError("field '" + spec.name + "': ontology acronym is empty");
    }
    if (auto br = it->find("branch"); br != it->end() && !br->is_null()) {
      if (!br->is_string() || br->get<std::string>().empty()) {
        throw ParseError("field '" + spec.name + "': branch must be a nonempty string");
      }
      b.branch_iri = br->get<std::string>();
    }
    if (auto lits = it->find("literals"); lits != it->end()) {
      if (!lits->is_array()) throw ParseError("field '" + spec.name + "': literals must be a list");
      b.extra_literals = unique_strings(*lits, spec.name);
    }
    spec.constraint = std::move(b);
  } else if (auto it = f.find("enum"); it != f.end()) {
    if (!it->is_array() || it->empty()) {
      throw ParseError("field '" + spec.name + "': enum must be a nonempty list");
    }
    spec.constraint = EnumLiterals{unique_strings(*it, spec.name)};
  } else if (auto it = f.find("pattern"); it != f.end()) {
    if (!it->is_string()) throw ParseError("field '" + spec.name + "': pattern must be a string");
    try {
      spec.constraint = Pattern(it->get<std::string>());
    } catch (const ParseError& e) {
      throw ParseError("field '" + spec.name + "': " + e.what());
    }
  } else {
    const auto& t = f.at("type");
    auto kind = t.is_string() ? typed_kind_from_string(t.get<std::string>()) : std::nullopt;
    if (!kind) {
      throw ParseError("field '" + spec.name + "': unrecognized type " + t.dump());
    }
    spec.constraint = Typed{*kind};
  }
  return spec;
}

TemplateParseResult parse_internal(const ordered_json& doc) {
  const auto& fields = doc.at("fields");
  std::vector<FieldSpec> specs;
  for (const auto& f : fields) specs.push_back(parse_internal_field(f));
  return {TemplateSpec(string_or(doc, "template_id"), std::move(specs)), {}};
}

constexpr std::string_view kTemplateField = "https://schema.metadatacenter.org/core/TemplateField";
constexpr std::string_view kStaticField = "https://schema.metadatacenter.org/core/StaticTemplateField";
constexpr std::string_view kTemplateElement = "https://schema.metadatacenter.org/core/TemplateElement";

std::string acronym_from_source(const ordered_json& src) {
  std::string acr = string_or(src, "acronym");
  if (acr.empty()) {
    // valueSets carry the acronym in vsCollection.
    acr = string_or(src, "vsCollection");
  }
  if (acr.empty()) acr = string_or(src, "source");
  // classes use "SOURCE (ACRONYM)" in the source attribute.
  if (auto open = acr.rfind('('); open != std::string::npos && acr.back() == ')') {
    acr = acr.substr(open + 1, acr.size() - open - 2);
  }
  return acr;
}

std::optional<FieldSpec> parse_cedar_field(const std::string& key, ordered_json prop,
                                           std::vector<std::string>& warnings) {
  if (prop.value("type", "") == "array" && prop.contains("items")) {
    warnings.push_back("field '" + key + "': multi-instance field read as a single value");
    prop = prop["items"];
  }
  std::string type = string_or(prop, "@type");
  if (type == kStaticField) return std::nullopt;
  if (type == kTemplateElement) {
    warnings.push_back("field '" + key + "': nested element skipped");
    return std::nullopt;
  }
  if (type != kTemplateField) {
    warnings.push_back("property '" + key + "': not a template field, skipped");
    return std::nullopt;
  }

  FieldSpec spec;
  spec.name = key;
  spec.description = string_or(prop, "schema:description");
  const ordered_json vc = prop.value("_valueConstraints", ordered_json::object());
  spec.required = vc.value("requiredValue", false);
  const ordered_json ui = prop.value("_ui", ordered_json::object());
  const std::string input_type = string_or(ui, "inputType", "textfield");

  std::vector<std::string> literals;
  if (auto it = vc.find("literals"); it != vc.end() && it->is_array()) {
    for (const auto& lit : *it) {
      auto label = string_or(lit, "label");
      if (!label.empty()) literals.push_back(label);
    }
  }

  std::vector<OntologyBinding> bindings;
  if (auto it = vc.find("branches"); it != vc.end() && it->is_array()) {
    for (const auto& br : *it) {
      OntologyBinding b{acronym_from_source(br), string_or(br, "uri"), {}};
      if (b.branch_iri->empty()) b.branch_iri.reset();
      bindings.push_back(std::move(b));
    }
  }
  for (const char* k : {"ontologies", "valueSets", "classes"}) {
    if (auto it = vc.find(k); it != vc.end() && it->is_array()) {
      for (const auto& src : *it) bindings.push_back({acronym_from_source(src), std::nullopt, {}});
    }
  }
  std::erase_if(bindings, [](const auto& b) { return b.acronym.empty(); });

  if (!bindings.empty()) {
    if (bindings.size() > 1) {
      warnings.push_back("field '" + key + "': " + std::to_string(bindings.size()) +
                         " ontology sources, using the first");
    }
    OntologyBinding b = std::move(bindings.front());
    b.extra_literals = std::move(literals);
    spec.constraint = std::move(b);
    return spec;
  }
  if (!literals.empty()) {
    std::set<std::string> seen;
    std::erase_if(literals, [&seen](const auto& l) { return !seen.insert(l).second; });
    spec.constraint = EnumLiterals{std::move(literals)};
    return spec;
  }
  if (auto re = string_or(vc, "regex"); !re.empty()) {
    spec.constraint = Pattern(re);
    return spec;
  }
  if (auto nt = string_or(vc, "numberType"); !nt.empty() || input_type == "numeric") {
    bool integral = nt == "xsd:int" || nt == "xsd:integer" || nt == "xsd:long";
    spec.constraint = Typed{integral ? TypedKind::kInteger : TypedKind::kDecimal};
    return spec;
  }
  if (auto tt = string_or(vc, "temporalType"); !tt.empty() || input_type == "temporal") {
    if (!tt.empty() && tt != "xsd:date") {
      warnings.push_back("field '" + key + "': temporal type " + tt + " read as date");
    }
    spec.constraint = Typed{TypedKind::kDate};
    return spec;
  }
  if (input_type == "link") {
    bool doi = text::fold_case(key).find("doi") != std::string::npos;
    spec.constraint = Typed{doi ? TypedKind::kDoiUrl : TypedKind::kFreeText};
    return spec;
  }
  static const std::set<std::string, std::less<>> kPlain = {
      "textfield", "textarea", "email", "phone-number", "radio", "list", "checkbox"};
  if (!kPlain.contains(input_type)) {
    warnings.push_back("field '" + key + "': unknown input type '" + input_type +
                       "' read as free text");
  }
  spec.constraint = Typed{TypedKind::kFreeText};
  return spec;
}

TemplateParseResult parse_cedar(const ordered_json& doc) {
  TemplateParseResult result;
  const auto& props = doc.at("properties");
  if (!props.is_object()) throw ParseError("CEDAR template properties is not an object");
  std::vector<std::string> order;
  if (doc.contains("_ui") && doc["_ui"].contains("order")) {
    for (const auto& k : doc["_ui"]["order"]) order.push_back(k.get<std::string>());
  } else {
    for (const auto& [k, v] : props.items()) {
      if (v.is_object() && v.contains("@type")) order.push_back(k);
    }
  }
  std::vector<FieldSpec> fields;
  for (const auto& key : order) {
    auto it = props.find(key);
    if (it == props.end()) {
      result.warnings.push_back("ordered field '" + key + "' missing from properties");
      continue;
    }
    try {
      if (auto f = parse_cedar_field(key, *it, result.warnings)) fields.push_back(std::move(*f));
    } catch (const ParseError& e) {
      throw ParseError("field '" + key + "': " + e.what());
    }
  }
  std::string id = string_or(doc, "@id");
  if (id.empty()) id = string_or(doc, "schema:identifier");
  result.spec = TemplateSpec(std::move(id), std::move(fields));
  return result;
}

}  // namespace

TemplateParseResult parse_template_document(std::string_view raw) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(raw);
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed template document: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("template document is not an object");
  try {
    if (doc.contains("fields") && doc["fields"].is_array()) return parse_internal(doc);
    if (doc.contains("properties")) return parse_cedar(doc);
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed template document: ") + e.what());
  }
  throw ParseError("document is neither an internal nor a CEDAR template");
}

TemplateSpec parse_template(std::string_view raw) {
  return parse_template_document(raw).spec;
}

ordered_json template_to_json(const TemplateSpec& spec) {
  ordered_json fields = ordered_json::array();
  for (const auto& f : spec.fields()) {
    ordered_json j = {{"name", f.name}, {"description", f.description}, {"required", f.required}};
    std::visit(
        [&j](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, OntologyBinding>) {
            ordered_json o = {{"acronym", c.acronym}};
            if (c.branch_iri) o["branch"] = *c.branch_iri;
            if (!c.extra_literals.empty()) o["literals"] = c.extra_literals;
            j["ontology"] = o;
          } else if constexpr (std::is_same_v<T, EnumLiterals>) {
            j["enum"] = c.permitted;
          } else if constexpr (std::is_same_v<T, Pattern>) {
            j["pattern"] = c.regex();
          } else {
            j["type"] = std::string(to_string(c.kind));
          }
        },
        f.constraint);
    fields.push_back(std::move(j));
  }
  return {{"template_id", spec.id()}, {"fields", std::move(fields)}};
}

std::string CedarClient::fetch(const std::string& template_id) {
  if (template_id.empty()) throw ContractError("template id is empty");
  std::string iri = template_id.find("://") == std::string::npos
                        ? "https://repo.metadatacenter.org/templates/" + template_id
                        : template_id;
  HttpRequest req;
  req.url = join_url(config_.endpoint, "/templates/" + text::percent_encode(iri));
  req.headers = {{"Authorization", "apiKey " + config_.api_key},
                 {"Accept", "application/json"}};
  req.timeout = config_.timeout;
  try {
    return send_with_retry(transport_, req, retry_).body;
  } catch (const NotFoundError&) {
    throw NotFoundError("template '" + template_id + "' not found");
  }
}

CachedResponse TemplateService::fetch_template(const std::string& template_id) {
  return cache_.cached_call(text::canonical_key("get_cedar_template", {{"template_id", template_id}}),
                            [&] { return source_.fetch(template_id); });
}

}  // namespace metastd
