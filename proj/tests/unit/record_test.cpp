#include "metastd/record.hpp"

#include <gtest/gtest.h>

#include <random>

#include "metastd/errors.hpp"
#include "test_support.hpp"

namespace metastd {
namespace {

using testing::TempDir;

TEST(MetadataRecord, PresentEmptyIsNotAbsent) {
  MetadataRecord r("r1");
  r.add("a", "");
  EXPECT_TRUE(r.contains("a"));
  EXPECT_FALSE(r.contains("b"));
  ASSERT_NE(r.find("a"), nullptr);
  EXPECT_EQ(*r.find("a"), "");

  MetadataRecord removed = r;
  removed.erase("a");
  EXPECT_FALSE(removed.same_fields(r));
  MetadataRecord emptied = r;
  emptied.set("a", "");
  EXPECT_TRUE(emptied.same_fields(r));
}

TEST(MetadataRecord, DuplicateAddThrows) {
  MetadataRecord r("r");
  r.add("a", "1");
  EXPECT_THROW(r.add("a", "2"), ParseError);
}

TEST(RecordParse, TsvBasic) {
  auto recs = parse_record_table("a\tb\nx\t\n", RecordFormat::kTsv);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].id(), "record-1");
  EXPECT_EQ(*recs[0].find("a"), "x");
  EXPECT_EQ(*recs[0].find("b"), "");
}

TEST(RecordParse, TsvKeepsValuesVerbatim) {
  auto recs = parse_record_table("a\n  padded  \n", RecordFormat::kTsv);
  EXPECT_EQ(*recs[0].find("a"), "  padded  ");
}

TEST(RecordParse, TsvIdKeyAndCrlfAndBom) {
  RecordParseOptions o;
  o.id_key = "id";
  auto recs = parse_record_table("\xEF\xBB\xBFid\tv\r\nA1\t1\r\nA2\t2\r\n", RecordFormat::kTsv, o);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id(), "A1");
  EXPECT_EQ(*recs[1].find("v"), "2");
}

TEST(RecordParse, TsvErrors) {
  EXPECT_THROW(parse_record_table("a\ta\n1\t2\n", RecordFormat::kTsv), ParseError);
  EXPECT_THROW(parse_record_table("a\tb\n1\n", RecordFormat::kTsv), ParseError);
  EXPECT_THROW(parse_record_table("a\t\n1\t2\n", RecordFormat::kTsv), ParseError);
}

TEST(RecordParse, ObjectForms) {
  auto one = parse_record_table(R"({"a": "x", "n": 5, "t": true, "z": null})",
                                RecordFormat::kObject);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].id(), "record");
  EXPECT_EQ(*one[0].find("n"), "5");
  EXPECT_EQ(*one[0].find("t"), "true");
  EXPECT_EQ(*one[0].find("z"), "");

  auto arr = parse_record_table(R"([{"a": "1"}, {"a": "2"}])", RecordFormat::kObject);
  EXPECT_EQ(arr.size(), 2u);
  auto nd = parse_record_table("{\"a\": \"1\"}\n{\"a\": \"2\"}\n", RecordFormat::kObject);
  EXPECT_EQ(nd.size(), 2u);
  EXPECT_EQ(nd[1].id(), "record-2");
}

TEST(RecordParse, ObjectErrors) {
  EXPECT_THROW(parse_record_table(R"({"a": "1", "a": "2"})", RecordFormat::kObject), ParseError);
  EXPECT_THROW(parse_record_table(R"({"a": {"b": 1}})", RecordFormat::kObject), ParseError);
  EXPECT_THROW(parse_record_table(R"({"a": )", RecordFormat::kObject), ParseError);
  EXPECT_THROW(parse_record_table(R"("text")", RecordFormat::kObject), ParseError);
}

TEST(RecordSerialize, DelimiterInNameRejected) {
  MetadataRecord r("r");
  r.add("a\tb", "x");
  EXPECT_THROW(serialize_record(r, RecordFormat::kTsv), ParseError);
  MetadataRecord v("r");
  v.add("a", "line\nbreak");
  EXPECT_THROW(serialize_record(v, RecordFormat::kTsv), ParseError);
  // The object format has no such restriction.
  EXPECT_NO_THROW(serialize_record(v, RecordFormat::kObject));
}

TEST(RecordSerialize, UnicodeSurvivesByteExactly) {
  MetadataRecord r("r");
  r.add("unit", "µm");
  for (auto fmt : {RecordFormat::kTsv, RecordFormat::kObject}) {
    auto back = parse_record_table(serialize_record(r, fmt), fmt);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(*back[0].find("unit"), "µm");
  }
}

TEST(RecordSerialize, ObjectKeepsFieldOrder) {
  MetadataRecord r("r");
  r.add("z", "1");
  r.add("a", "2");
  EXPECT_EQ(serialize_record(r, RecordFormat::kObject), "{\n  \"z\": \"1\",\n  \"a\": \"2\"\n}\n");
}

TEST(RecordSerialize, MultiRecordTsvNeedsSameHeader) {
  MetadataRecord a("a"), b("b");
  a.add("x", "1");
  b.add("y", "1");
  EXPECT_THROW(serialize_records_tsv({a, b}), ParseError);
}

// Property: parse(serialize(r)) has the same fields, for both formats.
TEST(RecordProperty, RoundTrip) {
  std::mt19937 rng(20240611);
  for (int iter = 0; iter < 300; ++iter) {
    MetadataRecord r("r");
    std::uniform_int_distribution<int> nfields(1, 8);
    int n = nfields(rng);
    for (int i = 0; i < n; ++i) {
      std::string name = "f" + std::to_string(i) + testing::random_text(rng, 4);
      r.add(name, testing::random_text(rng, 12));
    }
    for (auto fmt : {RecordFormat::kTsv, RecordFormat::kObject}) {
      auto back = parse_record_table(serialize_record(r, fmt), fmt);
      ASSERT_EQ(back.size(), 1u) << serialize_record(r, fmt);
      EXPECT_TRUE(back[0].same_fields(r)) << serialize_record(r, fmt);
    }
  }
}

TEST(LoadRecords, DirectorySkipsReviewSidecars) {
  TempDir dir;
  write_file(dir / "b.json", R"({"v": "2"})");
  write_file(dir / "a.json", R"({"v": "1"})");
  write_file(dir / "a.review.json", R"({"flagged": []})");
  write_file(dir / "notes.txt", "ignored");
  auto recs = load_records(dir.path());
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].id(), "a");
  EXPECT_EQ(recs[1].id(), "b");
}

TEST(LoadRecords, FileFormatsByExtension) {
  TempDir dir;
  write_file(dir / "in.tsv", "a\n1\n2\n");
  write_file(dir / "in.jsonl", "{\"a\": \"1\"}\n");
  EXPECT_EQ(load_records(dir / "in.tsv").size(), 2u);
  EXPECT_EQ(load_records(dir / "in.jsonl").size(), 1u);
  EXPECT_THROW(load_records(dir / "missing.tsv"), Error);
}

}  // namespace
}  // namespace metastd
