#pragma once

#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "metastd/cache.hpp"
#include "metastd/http.hpp"

namespace metastd {

struct OntologyBinding {
  std::string acronym;
  std::optional<std::string> branch_iri;
  // Literal values a CEDAR field permits alongside its ontology source.
  std::vector<std::string> extra_literals;

  bool operator==(const OntologyBinding&) const = default;
};

struct EnumLiterals {
  std::vector<std::string> permitted;

  bool operator==(const EnumLiterals&) const = default;
};

class Pattern {
 public:
  // Throws ParseError when `regex` is not a valid ECMAScript expression.
  explicit Pattern(std::string regex);

  const std::string& regex() const noexcept { return source_; }
  bool full_match(std::string_view value) const;

  bool operator==(const Pattern& other) const { return source_ == other.source_; }

 private:
  std::string source_;
  std::shared_ptr<const std::regex> compiled_;
};

enum class TypedKind { kFreeText, kInteger, kDecimal, kBooleanYesNo, kDoiUrl, kDate };

struct Typed {
  TypedKind kind = TypedKind::kFreeText;

  bool operator==(const Typed&) const = default;
};

using ValueConstraint = std::variant<OntologyBinding, EnumLiterals, Pattern, Typed>;

struct FieldSpec {
  std::string name;
  std::string description;
  bool required = false;
  ValueConstraint constraint = Typed{};

  const OntologyBinding* ontology() const { return std::get_if<OntologyBinding>(&constraint); }
  bool operator==(const FieldSpec&) const = default;
};

enum class FieldCategory { kOntologyConstrained, kNonOntologyConstrained };

std::string_view to_string(TypedKind kind);
std::optional<TypedKind> typed_kind_from_string(std::string_view s);
std::string_view to_string(FieldCategory category);

FieldCategory classify_field(const FieldSpec& field);

class TemplateSpec {
 public:
  TemplateSpec() = default;
  // Throws ParseError on duplicate or empty field names.
  TemplateSpec(std::string template_id, std::vector<FieldSpec> fields);

  const std::string& id() const noexcept { return id_; }
  const std::vector<FieldSpec>& fields() const noexcept { return fields_; }
  const FieldSpec* find(std::string_view name) const;

  bool operator==(const TemplateSpec&) const = default;

 private:
  std::string id_;
  std::vector<FieldSpec> fields_;
};

struct TemplateParseResult {
  TemplateSpec spec;
  // Adapter notes for CEDAR content that has no internal equivalent.
  std::vector<std::string> warnings;
};

// Accepts the internal template document ({template_id, fields[]}) or a
// CEDAR-native JSON schema template.
TemplateParseResult parse_template_document(std::string_view raw);
TemplateSpec parse_template(std::string_view raw);

// Internal template document for `spec`.
nlohmann::ordered_json template_to_json(const TemplateSpec& spec);

// Where raw template documents come from.
class TemplateSource {
 public:
  virtual ~TemplateSource() = default;
  // Returns the upstream document unmodified. Throws NotFoundError.
  virtual std::string fetch(const std::string& template_id) = 0;
};

struct CedarConfig {
  std::string endpoint = "https://resource.metadatacenter.org";
  std::string api_key;
  std::chrono::milliseconds timeout{30000};
};

class CedarClient : public TemplateSource {
 public:
  CedarClient(CedarConfig config, HttpTransport& transport, RetryPolicy retry = {})
      : config_(std::move(config)), transport_(transport), retry_(std::move(retry)) {}

  std::string fetch(const std::string& template_id) override;

 private:
  CedarConfig config_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

// Every template fetch goes through the shared response cache.
class TemplateService {
 public:
  TemplateService(TemplateSource& source, ResponseCache& cache)
      : source_(source), cache_(cache) {}

  CachedResponse fetch_template(const std::string& template_id);

 private:
  TemplateSource& source_;
  ResponseCache& cache_;
};

}  // namespace metastd
