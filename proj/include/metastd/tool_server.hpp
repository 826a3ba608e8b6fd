#pragma once

#include <atomic>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metastd/errors.hpp"
#include "metastd/template.hpp"
#include "metastd/terminology.hpp"

namespace metastd {

using nlohmann::ordered_json;

inline constexpr const char* kGetTemplateTool = "get_cedar_template";
inline constexpr const char* kSearchOntologyTool = "term_search_from_ontology";
inline constexpr const char* kSearchBranchTool = "term_search_from_branch";

struct ToolDescriptor {
  std::string name;
  std::string description;
  ordered_json input_schema;

  std::vector<std::string> required_params() const;
  ordered_json to_json() const;
};

// The three tools, in advertised order.
const std::vector<ToolDescriptor>& tool_descriptors();

class UnknownToolError : public Error {
 public:
  using Error::Error;
};

class InvalidArgumentsError : public Error {
 public:
  using Error::Error;
};

struct ToolOutcome {
  // MCP tool result: content[] text block, structuredContent, isError.
  ordered_json result;
  bool is_error = false;
  bool from_cache = false;
};

// Tool calls as an agent loop sees them.
class ToolAccess {
 public:
  virtual ~ToolAccess() = default;
  virtual std::vector<ToolDescriptor> list_tools() const { return tool_descriptors(); }
  // Throws UnknownToolError and InvalidArgumentsError. Upstream failures come
  // back as an error outcome.
  virtual ToolOutcome call_tool(const std::string& name, const ordered_json& args) = 0;
};

class ToolService : public ToolAccess {
 public:
  ToolService(TemplateService& templates, TermSearch& terms)
      : templates_(templates), terms_(terms) {}

  ToolOutcome call_tool(const std::string& name, const ordered_json& args) override;
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  TemplateService& templates_;
  TermSearch& terms_;
  std::atomic<std::size_t> calls_{0};
};

// Candidates carried by a search tool result's structured payload.
std::vector<TermCandidate> candidates_from_tool_result(const ordered_json& result);

// JSON-RPC 2.0 over newline-delimited frames: initialize, ping, tools/list,
// tools/call. Tool calls may run concurrently; each response is written as
// one whole line.
class JsonRpcServer {
 public:
  struct Options {
    std::size_t max_concurrent_calls = 8;
    std::string server_name = "metastd-tools";
    std::string server_version = "0.1.0";
  };

  explicit JsonRpcServer(ToolAccess& tools) : JsonRpcServer(tools, Options{}) {}
  JsonRpcServer(ToolAccess& tools, Options options) : tools_(tools), options_(std::move(options)) {}

  // Reads requests until EOF and returns after every response is written.
  void serve(std::istream& in, std::ostream& out);

  // Response for one frame; nullopt for notifications.
  std::optional<ordered_json> handle_line(const std::string& line);
  std::optional<ordered_json> handle_message(const ordered_json& message);

 private:
  ordered_json dispatch(const std::string& method, const ordered_json& params);

  ToolAccess& tools_;
  Options options_;
};

}  // namespace metastd
