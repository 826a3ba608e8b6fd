#include "metastd/template.hpp"

#include <gtest/gtest.h>

#include "metastd/errors.hpp"
#include "metastd/mock.hpp"
#include "test_support.hpp"

namespace metastd {
namespace {

constexpr const char* kBranch = "https://purl.humanatlas.io/vocab/hravs#HRAVS_0000100";

std::string one_field(const std::string& body) {
  return R"({"template_id": "t", "fields": [{"name": "f", "description": "", "required": false, )" +
         body + "}]}";
}

TEST(TemplateParse, OntologyWithBranch) {
  auto spec = parse_template(one_field(R"("ontology": {"acronym": "HRAVS", "branch": ")" +
                                       std::string(kBranch) + R"("})"));
  ASSERT_EQ(spec.fields().size(), 1u);
  const auto* b = spec.fields()[0].ontology();
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->acronym, "HRAVS");
  EXPECT_EQ(b->branch_iri, kBranch);
  EXPECT_EQ(classify_field(spec.fields()[0]), FieldCategory::kOntologyConstrained);
}

TEST(TemplateParse, EachConstraintShape) {
  auto e = parse_template(one_field(R"("enum": ["Read 1", "Read 2"])"));
  EXPECT_EQ(std::get<EnumLiterals>(e.fields()[0].constraint).permitted.size(), 2u);
  auto p = parse_template(one_field(R"("pattern": "[A-Z]+-[0-9]+")"));
  EXPECT_TRUE(std::get<Pattern>(p.fields()[0].constraint).full_match("LIB-1"));
  EXPECT_FALSE(std::get<Pattern>(p.fields()[0].constraint).full_match("xLIB-1"));
  for (const char* k : {"free-text", "integer", "decimal", "boolean-yes-no", "doi-url", "date"}) {
    auto t = parse_template(one_field(std::string(R"("type": ")") + k + "\""));
    EXPECT_EQ(to_string(std::get<Typed>(t.fields()[0].constraint).kind), k);
    EXPECT_EQ(classify_field(t.fields()[0]), FieldCategory::kNonOntologyConstrained);
  }
}

TEST(TemplateParse, ErrorsNameTheField) {
  auto expect_error = [](const std::string& doc, const std::string& needle) {
    try {
      parse_template(doc);
      ADD_FAILURE() << "no error for " << doc;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error(one_field(R"("colour": "red")"), "'f'");
  expect_error(one_field(R"("type": "integer", "enum": ["a"])"), "'f'");
  expect_error(one_field(R"("type": "complex")"), "'f'");
  expect_error(one_field(R"("enum": ["a", "a"])"), "duplicate enum value");
  expect_error(one_field(R"("pattern": "([a-z")"), "'f'");
  expect_error(one_field(R"("ontology": {"acronym": ""})"), "acronym");
  expect_error(R"({"template_id": "t", "fields": [{"name": "a", "type": "integer"},
                                                  {"name": "a", "type": "integer"}]})",
               "duplicate template field 'a'");
  expect_error("not json", "malformed");
  expect_error(R"({"something": 1})", "neither");
}

TEST(TemplateParse, RoundTripThroughInternalDocument) {
  TemplateSpec spec = testing::rnaseq_template();
  EXPECT_EQ(parse_template(template_to_json(spec).dump()), spec);
}

TEST(TemplateParse, FixtureTemplateShape) {
  TemplateSpec spec = testing::rnaseq_template();
  EXPECT_EQ(spec.id(), "rnaseq");
  ASSERT_NE(spec.find("assay_input_entity"), nullptr);
  EXPECT_EQ(spec.find("assay_input_entity")->ontology()->branch_iri, kBranch);
  EXPECT_EQ(spec.find("protocols_io_doi")->constraint, ValueConstraint(Typed{TypedKind::kDoiUrl}));
  EXPECT_EQ(spec.find("no_such_field"), nullptr);
}

TEST(CedarAdapter, ExtractsConstraints) {
  auto parsed = parse_template_document(
      read_file(testing::mock_dir() / "templates" / "cedar-sample.json"));
  const TemplateSpec& spec = parsed.spec;
  std::vector<std::string> names;
  for (const auto& f : spec.fields()) names.push_back(f.name);
  EXPECT_EQ(names, (std::vector<std::string>{"source_id", "assay_input_entity", "organ",
                                             "is_frozen", "protocols_io_doi", "section_count",
                                             "procurement_date", "storage_medium"}));
  EXPECT_TRUE(spec.find("source_id")->required);
  EXPECT_TRUE(std::holds_alternative<Pattern>(spec.find("source_id")->constraint));
  EXPECT_EQ(spec.find("assay_input_entity")->ontology()->branch_iri, kBranch);
  // Literals next to an ontology source become extra candidates.
  EXPECT_EQ(spec.find("organ")->ontology()->extra_literals,
            std::vector<std::string>{"not applicable"});
  EXPECT_EQ(std::get<EnumLiterals>(spec.find("is_frozen")->constraint).permitted,
            (std::vector<std::string>{"Yes", "No"}));
  EXPECT_EQ(spec.find("protocols_io_doi")->constraint, ValueConstraint(Typed{TypedKind::kDoiUrl}));
  EXPECT_EQ(spec.find("section_count")->constraint, ValueConstraint(Typed{TypedKind::kInteger}));
  EXPECT_EQ(spec.find("procurement_date")->constraint, ValueConstraint(Typed{TypedKind::kDate}));
  EXPECT_EQ(parsed.warnings.size(), 2u);  // multi-instance field, nested element
}

TEST(TemplateService, FetchGoesThroughCache) {
  MockTemplateStore store;
  store.add("t1", "{\"template_id\": \"t1\", \"fields\": []}");
  ResponseCache cache;
  TemplateService svc(store, cache);
  auto first = svc.fetch_template("t1");
  auto second = svc.fetch_template("t1");
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(first.payload, second.payload);
  EXPECT_EQ(store.requests(), 1u);
  EXPECT_THROW(svc.fetch_template("unknown"), NotFoundError);
}

}  // namespace
}  // namespace metastd
