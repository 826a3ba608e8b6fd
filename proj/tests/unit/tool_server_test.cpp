#include "metastd/tool_server.hpp"

#include <gtest/gtest.h>

#include <sstream>

#include "metastd/errors.hpp"
#include "test_support.hpp"

namespace metastd {
namespace {

constexpr const char* kInputBranch = "https://purl.humanatlas.io/vocab/hravs#HRAVS_0000100";

std::vector<std::string> names(const std::vector<ToolDescriptor>& tools) {
  std::vector<std::string> out;
  for (const auto& t : tools) out.push_back(t.name);
  return out;
}

TEST(ToolDescriptors, ExactlyThreeInStableOrder) {
  EXPECT_EQ(names(tool_descriptors()),
            (std::vector<std::string>{"get_cedar_template", "term_search_from_ontology",
                                      "term_search_from_branch"}));
  EXPECT_EQ(tool_descriptors()[0].required_params(), std::vector<std::string>{"template_id"});
  EXPECT_EQ(tool_descriptors()[1].required_params(),
            (std::vector<std::string>{"ontology", "query"}));
  EXPECT_EQ(tool_descriptors()[2].required_params(),
            (std::vector<std::string>{"ontology", "branch_iri", "query"}));
  EXPECT_EQ(tool_descriptors()[0].to_json().dump(), tool_descriptors()[0].to_json().dump());
}

class ToolServiceTest : public ::testing::Test {
 protected:
  testing::MockStack mock;
  ToolService& tools() { return mock.stack->tools(); }
};

TEST_F(ToolServiceTest, BranchSearchFindsSingleNucleus) {
  auto out = tools().call_tool(kSearchBranchTool, {{"ontology", "HRAVS"},
                                                   {"branch_iri", kInputBranch},
                                                   {"query", "single nucleus"}});
  EXPECT_FALSE(out.is_error);
  auto cs = candidates_from_tool_result(out.result);
  ASSERT_FALSE(cs.empty());
  EXPECT_EQ(cs[0].preferred_label, "single nucleus");
  EXPECT_EQ(out.result["structuredContent"]["branch_iri"], kInputBranch);
  EXPECT_EQ(out.result["content"][0]["type"], "text");
  EXPECT_EQ(out.result["content"][0]["text"], out.result["structuredContent"].dump());
}

TEST_F(ToolServiceTest, TemplateFetchReturnsDocument) {
  auto out = tools().call_tool(kGetTemplateTool, {{"template_id", "rnaseq"}});
  EXPECT_FALSE(out.is_error);
  EXPECT_EQ(out.result["structuredContent"]["template"]["template_id"], "rnaseq");
  EXPECT_EQ(out.result["content"][0]["text"],
            read_file(testing::mock_dir() / "templates" / "rnaseq.json"));
}

TEST_F(ToolServiceTest, UnknownTemplateIsToolError) {
  auto out = tools().call_tool(kGetTemplateTool, {{"template_id", "nope"}});
  EXPECT_TRUE(out.is_error);
  EXPECT_EQ(out.result["isError"], true);
  EXPECT_EQ(out.result["structuredContent"]["error"]["kind"], "not-found");
}

TEST_F(ToolServiceTest, ContractViolations) {
  EXPECT_THROW(tools().call_tool("no_such_tool", ordered_json::object()), UnknownToolError);
  EXPECT_THROW(tools().call_tool(kSearchOntologyTool, {{"ontology", "HRAVS"}}),
               InvalidArgumentsError);
  EXPECT_THROW(tools().call_tool(kSearchOntologyTool, {{"ontology", "HRAVS"}, {"query", 3}}),
               InvalidArgumentsError);
  EXPECT_THROW(tools().call_tool(kSearchOntologyTool,
                                 {{"ontology", "HRAVS"}, {"query", "x"}, {"extra", "y"}}),
               InvalidArgumentsError);
  EXPECT_THROW(tools().call_tool(kGetTemplateTool, ordered_json::array()), InvalidArgumentsError);
}

TEST(ToolService, MalformedUpstreamIsToolError) {
  auto fixture = testing::ontology_fixture();
  fixture["poison_queries"] = {"bad"};
  testing::MockStack mock(fixture);
  auto out = mock.stack->tools().call_tool(kSearchOntologyTool,
                                           {{"ontology", "HRAVS"}, {"query", "bad"}});
  EXPECT_TRUE(out.is_error);
  EXPECT_EQ(out.result["structuredContent"]["error"]["kind"], "malformed-payload");
}

// Property: every search through the tool surface equals the direct call.
TEST_F(ToolServiceTest, RoundTripEqualsDirectCall) {
  auto fixture = testing::ontology_fixture();
  testing::MockStack direct;
  for (const auto& onto : fixture["ontologies"]) {
    for (const auto& term : onto["terms"]) {
      std::string acr = onto["acronym"], q = term["label"];
      auto out = tools().call_tool(kSearchOntologyTool, {{"ontology", acr}, {"query", q}});
      EXPECT_EQ(candidates_from_tool_result(out.result),
                direct.stack->terminology().search_ontology(acr, q).candidates);
      auto br = tools().call_tool(kSearchBranchTool,
                                  {{"ontology", acr}, {"branch_iri", kInputBranch}, {"query", q}});
      EXPECT_EQ(candidates_from_tool_result(br.result),
                direct.stack->terminology().search_branch(acr, kInputBranch, q).candidates);
    }
  }
}

class JsonRpcTest : public ToolServiceTest {
 protected:
  ordered_json call(const std::string& line) {
    JsonRpcServer server(tools());
    auto r = server.handle_line(line);
    EXPECT_TRUE(r.has_value()) << line;
    return r ? *r : ordered_json();
  }
};

TEST_F(JsonRpcTest, Initialize) {
  auto r = call(R"({"jsonrpc":"2.0","id":1,"method":"initialize","params":{"protocolVersion":"2024-11-05"}})");
  EXPECT_EQ(r["result"]["protocolVersion"], "2024-11-05");
  EXPECT_EQ(r["result"]["capabilities"]["tools"]["listChanged"], false);
  auto future = call(R"({"jsonrpc":"2.0","id":2,"method":"initialize","params":{"protocolVersion":"2099-01-01"}})");
  EXPECT_EQ(future["result"]["protocolVersion"], "2025-06-18");
}

TEST_F(JsonRpcTest, ToolsListAndCall) {
  auto list = call(R"({"jsonrpc":"2.0","id":"a","method":"tools/list"})");
  EXPECT_EQ(list["id"], "a");
  ASSERT_EQ(list["result"]["tools"].size(), 3u);
  EXPECT_EQ(list["result"]["tools"][2]["name"], "term_search_from_branch");
  auto r = call(R"({"jsonrpc":"2.0","id":7,"method":"tools/call","params":{"name":"term_search_from_ontology","arguments":{"ontology":"UBERON","query":"lung"}}})");
  EXPECT_EQ(r["result"]["isError"], false);
  EXPECT_EQ(r["result"]["structuredContent"]["candidates"][0]["preferred_label"], "lung");
}

TEST_F(JsonRpcTest, ProtocolErrors) {
  EXPECT_EQ(call("{not json")["error"]["code"], -32700);
  EXPECT_EQ(call(R"({"jsonrpc":"1.0","id":1,"method":"ping"})")["error"]["code"], -32600);
  EXPECT_EQ(call(R"({"jsonrpc":"2.0","id":1,"method":"resources/list"})")["error"]["code"], -32601);
  EXPECT_EQ(call(R"({"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"nope","arguments":{}}})")["error"]["code"],
            -32602);
  EXPECT_EQ(call(R"({"jsonrpc":"2.0","id":1,"method":"tools/call","params":{"name":"get_cedar_template","arguments":{}}})")["error"]["code"],
            -32602);
  EXPECT_TRUE(call(R"({"jsonrpc":"2.0","id":1,"method":"ping"})")["result"].empty());
}

TEST_F(JsonRpcTest, NotificationsGetNoResponse) {
  JsonRpcServer server(tools());
  EXPECT_FALSE(server.handle_line(R"({"jsonrpc":"2.0","method":"notifications/initialized"})"));
}

TEST_F(JsonRpcTest, ServeAnswersEveryRequestOnItsOwnLine) {
  std::string input;
  for (int i = 0; i < 20; ++i) {
    input += R"({"jsonrpc":"2.0","id":)" + std::to_string(i) +
             R"(,"method":"tools/call","params":{"name":"term_search_from_ontology","arguments":{"ontology":"UBERON","query":"lung"}}})" +
             "\n";
  }
  input += R"({"jsonrpc":"2.0","method":"notifications/initialized"})" "\n\n";
  std::istringstream in(input);
  std::ostringstream out;
  JsonRpcServer server(tools());
  server.serve(in, out);
  std::istringstream lines(out.str());
  std::set<int> ids;
  std::string line;
  while (std::getline(lines, line)) {
    auto j = ordered_json::parse(line);
    ids.insert(j["id"].get<int>());
    EXPECT_EQ(j["result"]["structuredContent"]["candidates"][0]["preferred_label"], "lung");
  }
  EXPECT_EQ(ids.size(), 20u);
}

}  // namespace
}  // namespace metastd
