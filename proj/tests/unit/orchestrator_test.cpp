#include "metastd/orchestrator.hpp"

#include <gtest/gtest.h>

#include "metastd/errors.hpp"
#include "test_support.hpp"

namespace metastd {
namespace {

namespace fs = std::filesystem;

class BatchTest : public ::testing::Test {
 protected:
  testing::TempDir tmp{"batch"};

  RunConfig config(const fs::path& input, const std::string& out = "out") {
    RunConfig c;
    c.input = input;
    c.output_dir = tmp / out;
    c.template_file = testing::mock_dir() / "templates" / "rnaseq.json";
    c.id_key = "record_id";
    c.services.mock_fixtures = testing::mock_dir();
    return c;
  }

  fs::path corpus() { return testing::fixture_dir() / "corpus" / "rnaseq_legacy.jsonl"; }

  fs::path write(const std::string& name, const std::string& body) {
    fs::path p = tmp / name;
    write_file(p, body);
    return p;
  }
};

std::size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

TEST_F(BatchTest, WritesRecordsReviewsAndManifest) {
  testing::MockStack mock;
  auto summary = run_batch(config(corpus()), *mock.stack);
  ASSERT_EQ(summary.outcomes.size(), 6u);
  EXPECT_EQ(summary.errors(), 0u);
  auto tree = testing::read_tree(tmp / "out");
  EXPECT_EQ(tree.count("records/HBM001.json"), 1u);
  EXPECT_EQ(tree.count("records/HBM001.review.json"), 1u);
  EXPECT_EQ(count_lines(tree["manifest.jsonl"]), 8u);  // run + 6 records + summary
  EXPECT_FALSE(fs::exists(tmp / "out" / "logs"));

  auto rec = parse_record_table(tree["records/HBM002.json"], RecordFormat::kObject);
  ASSERT_EQ(rec.size(), 1u);
  EXPECT_EQ(*rec[0].find("is_technical_replicate"), "Yes");
  EXPECT_EQ(*rec[0].find("assay_input_entity"), "single nucleus");
  auto review = nlohmann::json::parse(tree["records/HBM002.review.json"]);
  EXPECT_EQ(review["record_id"], "HBM002");
  EXPECT_FALSE(review["flagged"].empty());
  EXPECT_EQ(summary.outcomes[1].flagged, review["flagged"].size());
}

TEST_F(BatchTest, ParallelismDoesNotChangeRecords) {
  testing::MockStack a, b;
  auto one = config(corpus(), "p1");
  auto eight = config(corpus(), "p8");
  eight.parallelism = 8;
  run_batch(one, *a.stack);
  run_batch(eight, *b.stack);
  auto t1 = testing::read_tree(tmp / "p1" / "records");
  EXPECT_EQ(t1.size(), 12u);
  EXPECT_EQ(t1, testing::read_tree(tmp / "p8" / "records"));
  eight.output_dir = one.output_dir;
  EXPECT_EQ(one.digest(), eight.digest());
}

TEST_F(BatchTest, SharedValuesHitTheCache) {
  std::string body;
  for (int i = 0; i < 40; ++i) {
    body += "{\"record_id\": \"R" + std::to_string(i) +
            "\", \"assay_input_entity\": \"nucleus\", \"organ\": \"Lung\"}\n";
  }
  testing::MockStack mock;
  auto c = config(write("in.jsonl", body));
  c.parallelism = 4;
  auto summary = run_batch(c, *mock.stack);
  // One distinct query per ontology field.
  EXPECT_EQ(summary.upstream_calls, 2u);
  EXPECT_EQ(mock.mocks.terminology->requests(), 2u);
  EXPECT_EQ(summary.cache_hits, 78u);
}

TEST_F(BatchTest, FailingRecordBecomesErrorEntry) {
  // Raw TSV bytes pass through verbatim; invalid UTF-8 cannot be written as
  // a JSON record.
  auto input = write("in.tsv", "record_id\torgan\nA\tlung\nB\tlu\xffng\nC\tkidney\n");
  testing::MockStack mock;
  auto summary = run_batch(config(input), *mock.stack);
  ASSERT_EQ(summary.outcomes.size(), 3u);
  EXPECT_TRUE(summary.outcomes[0].ok);
  EXPECT_FALSE(summary.outcomes[1].ok);
  EXPECT_FALSE(summary.outcomes[1].error.empty());
  EXPECT_TRUE(summary.outcomes[2].ok);
  EXPECT_EQ(summary.errors(), 1u);
  auto manifest = read_file(tmp / "out" / "manifest.jsonl");
  EXPECT_NE(manifest.find("\"status\":\"error\""), std::string::npos);
}

TEST_F(BatchTest, SkipExistingLeavesOutputsAlone) {
  testing::MockStack mock;
  auto c = config(corpus());
  run_batch(c, *mock.stack);
  fs::path kept = tmp / "out" / "records" / "HBM001.json";
  write_file(kept, "sentinel");
  fs::remove(tmp / "out" / "records" / "HBM002.json");
  c.skip_existing = true;
  auto summary = run_batch(c, *mock.stack);
  EXPECT_EQ(read_file(kept), "sentinel");
  EXPECT_TRUE(summary.outcomes[0].skipped);
  EXPECT_FALSE(summary.outcomes[1].skipped);
  EXPECT_TRUE(fs::exists(tmp / "out" / "records" / "HBM002.json"));
}

TEST_F(BatchTest, SeededSample) {
  auto ids = [&](std::uint64_t seed, const std::string& out) {
    testing::MockStack mock;
    auto c = config(corpus(), out);
    c.sample = 3;
    c.seed = seed;
    std::vector<std::string> v;
    for (const auto& o : run_batch(c, *mock.stack).outcomes) v.push_back(o.record_id);
    return v;
  };
  auto first = ids(7, "s1");
  ASSERT_EQ(first.size(), 3u);
  EXPECT_TRUE(std::is_sorted(first.begin(), first.end()));
  EXPECT_EQ(ids(7, "s2"), first);
}

TEST_F(BatchTest, OutputNameCollision) {
  auto input = write("in.jsonl", "{\"record_id\": \"a/b\", \"organ\": \"lung\"}\n"
                                 "{\"record_id\": \"a_b\", \"organ\": \"lung\"}\n");
  testing::MockStack mock;
  auto summary = run_batch(config(input), *mock.stack);
  EXPECT_TRUE(summary.outcomes[0].ok);
  EXPECT_FALSE(summary.outcomes[1].ok);
  EXPECT_NE(summary.outcomes[1].error.find("collides"), std::string::npos);
}

TEST_F(BatchTest, AgentModeWritesTranscripts) {
  testing::MockStack mock;
  auto c = config(corpus());
  c.mode = RunMode::kAgent;
  c.template_id = "rnaseq";
  c.backend_kind = "echo";
  auto summary = run_batch(c, *mock.stack);
  EXPECT_EQ(summary.errors(), 0u);
  auto transcripts = read_file(tmp / "out" / "logs" / "transcripts.jsonl");
  // system, user, model per record
  EXPECT_EQ(count_lines(transcripts), 18u);
  EXPECT_NE(transcripts.find("\"record_id\":\"HBM001\""), std::string::npos);
}

TEST_F(BatchTest, BaselineModeUsesNoTools) {
  testing::MockStack mock;
  auto c = config(corpus());
  c.mode = RunMode::kBaseline;
  c.backend_kind = "echo";
  auto summary = run_batch(c, *mock.stack);
  EXPECT_EQ(summary.errors(), 0u);
  for (const auto& o : summary.outcomes) EXPECT_EQ(o.tool_calls, 0u);
  EXPECT_EQ(mock.mocks.terminology->requests(), 0u);
}

TEST_F(BatchTest, ConfigValidation) {
  auto c = config(corpus());
  c.parallelism = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(tmp / "missing.jsonl");
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(corpus());
  c.mode = RunMode::kAgent;
  c.backend_kind = "echo";
  EXPECT_THROW(c.validate(), ConfigError);  // no template id
  c.template_id = "rnaseq";
  c.backend_kind = "carrier-pigeon";
  EXPECT_THROW(c.validate(), ConfigError);
  c = config(corpus());
  c.sample = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(config(corpus()).validate());
}

TEST_F(BatchTest, UnknownTemplateIdFailsUpFront) {
  testing::MockStack mock;
  auto c = config(corpus());
  c.template_file.reset();
  c.template_id = "nope";
  EXPECT_THROW(run_batch(c, *mock.stack), ConfigError);
}

TEST(OutputName, SafeCharactersOnly) {
  EXPECT_EQ(output_name_for("HBM-1.a_b"), "HBM-1.a_b");
  EXPECT_EQ(output_name_for("a/b c"), "a_b_c");
  EXPECT_EQ(output_name_for(""), "_");
  EXPECT_EQ(output_name_for(".."), "_..");
}

TEST(RunModes, RoundTrip) {
  for (auto m : {RunMode::kAgent, RunMode::kBaseline, RunMode::kDeterministic}) {
    EXPECT_EQ(run_mode_from_string(to_string(m)), m);
  }
  EXPECT_FALSE(run_mode_from_string("fast"));
}

}  // namespace
}  // namespace metastd
