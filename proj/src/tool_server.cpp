#include "metastd/tool_server.hpp"

#include <spdlog/spdlog.h>

#include <istream>
#include <ostream>
#include <semaphore>
#include <thread>

namespace metastd {

namespace {

ordered_json string_param(const char* description) {
  return {{"type", "string"}, {"description", description}};
}

ordered_json object_schema(ordered_json properties, std::vector<std::string> required) {
  return {{"type", "object"},
          {"properties", std::move(properties)},
          {"required", std::move(required)},
          {"additionalProperties", false}};
}

}  // namespace

std::vector<std::string> ToolDescriptor::required_params() const {
  return input_schema.at("required").get<std::vector<std::string>>();
}

ordered_json ToolDescriptor::to_json() const {
  return {{"name", name}, {"description", description}, {"inputSchema", input_schema}};
}

const std::vector<ToolDescriptor>& tool_descriptors() {
  static const std::vector<ToolDescriptor> kTools = {
      {kGetTemplateTool,
       "Retrieve the full CEDAR template specification for a template identifier: field "
       "definitions, data types, string patterns, and ontology value constraints.",
       object_schema({{"template_id", string_param("CEDAR template identifier")}},
                     {"template_id"})},
      {kSearchOntologyTool,
       "Search a BioPortal ontology for terms matching a string anywhere in the ontology. "
       "Returns candidate terms with preferred labels and concept identifiers.",
       object_schema({{"ontology", string_param("Ontology acronym, e.g. UBERON")},
                      {"query", string_param("Search string")}},
                     {"ontology", "query"})},
      {kSearchBranchTool,
       "Search for terms matching a string within the branch of an ontology rooted at a "
       "given concept. Returns candidate terms with preferred labels and concept identifiers.",
       object_schema({{"ontology", string_param("Ontology acronym, e.g. HRAVS")},
                      {"branch_iri", string_param("Concept identifier of the branch root")},
                      {"query", string_param("Search string")}},
                     {"ontology", "branch_iri", "query"})},
  };
  return kTools;
}

namespace {

const ToolDescriptor* find_tool(const std::string& name) {
  for (const auto& t : tool_descriptors()) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void validate_args(const ToolDescriptor& tool, const ordered_json& args) {
  if (!args.is_object()) {
    throw InvalidArgumentsError(tool.name + ": arguments must be an object");
  }
  const auto& props = tool.input_schema.at("properties");
  for (const auto& [key, value] : args.items()) {
    if (!props.contains(key)) {
      throw InvalidArgumentsError(tool.name + ": unexpected argument '" + key + "'");
    }
    if (!value.is_string()) {
      throw InvalidArgumentsError(tool.name + ": argument '" + key + "' must be a string");
    }
  }
  for (const auto& req : tool.required_params()) {
    auto it = args.find(req);
    if (it == args.end() || it->get<std::string>().empty()) {
      throw InvalidArgumentsError(tool.name + ": missing required argument '" + req + "'");
    }
  }
}

ordered_json text_block(std::string text) {
  return ordered_json::array({{{"type", "text"}, {"text", std::move(text)}}});
}

ToolOutcome error_outcome(std::string_view kind, const std::string& message) {
  ToolOutcome out;
  out.is_error = true;
  out.result = {{"content", text_block(std::string(kind) + ": " + message)},
                {"structuredContent", {{"error", {{"kind", kind}, {"message", message}}}}},
                {"isError", true}};
  return out;
}

ToolOutcome search_outcome(ordered_json structured, const SearchResult& found) {
  ordered_json candidates = ordered_json::array();
  for (const auto& c : found.candidates) candidates.push_back(candidate_to_json(c));
  structured["candidates"] = std::move(candidates);
  ToolOutcome out;
  out.from_cache = found.from_cache;
  out.result = {{"content", text_block(structured.dump())},
                {"structuredContent", std::move(structured)},
                {"isError", false}};
  return out;
}

}  // namespace

ToolOutcome ToolService::call_tool(const std::string& name, const ordered_json& args) {
  const ToolDescriptor* tool = find_tool(name);
  if (!tool) throw UnknownToolError("unknown tool '" + name + "'");
  validate_args(*tool, args);
  ++calls_;
  try {
    if (name == kGetTemplateTool) {
      std::string id = args.at("template_id").get<std::string>();
      CachedResponse raw = templates_.fetch_template(id);
      ordered_json doc;
      try {
        doc = ordered_json::parse(raw.payload);
      } catch (const ordered_json::exception&) {
        return error_outcome("malformed-payload", "template '" + id + "' is not JSON");
      }
      ToolOutcome out;
      out.from_cache = raw.from_cache;
      out.result = {{"content", text_block(raw.payload)},
                    {"structuredContent", {{"template_id", id}, {"template", std::move(doc)}}},
                    {"isError", false}};
      return out;
    }
    std::string onto = args.at("ontology").get<std::string>();
    std::string query = args.at("query").get<std::string>();
    if (name == kSearchOntologyTool) {
      return search_outcome({{"ontology", onto}, {"query", query}},
                            terms_.search_ontology(onto, query));
    }
    std::string branch = args.at("branch_iri").get<std::string>();
    return search_outcome({{"ontology", onto}, {"branch_iri", branch}, {"query", query}},
                          terms_.search_branch(onto, branch, query));
  } catch (const NotFoundError& e) {
    return error_outcome("not-found", e.what());
  } catch (const AuthError& e) {
    return error_outcome("auth", e.what());
  } catch (const TimeoutError& e) {
    return error_outcome("timeout", e.what());
  } catch (const MalformedPayloadError& e) {
    return error_outcome("malformed-payload", e.what());
  } catch (const Error& e) {
    return error_outcome("upstream", e.what());
  }
}

std::vector<TermCandidate> candidates_from_tool_result(const ordered_json& result) {
  std::vector<TermCandidate> out;
  auto sc = result.find("structuredContent");
  if (sc == result.end() || !sc->is_object()) return out;
  auto cands = sc->find("candidates");
  if (cands == sc->end() || !cands->is_array()) return out;
  for (const auto& c : *cands) out.push_back(candidate_from_json(c));
  return out;
}

// ---------------------------------------------------------------------------
// JSON-RPC framing

namespace {

constexpr int kParseError = -32700;
constexpr int kInvalidRequest = -32600;
constexpr int kMethodNotFound = -32601;
constexpr int kInvalidParams = -32602;
constexpr int kInternalError = -32603;

struct RpcError {
  int code;
  std::string message;
};

ordered_json error_response(const ordered_json& id, int code, const std::string& message) {
  return {{"jsonrpc", "2.0"}, {"id", id}, {"error", {{"code", code}, {"message", message}}}};
}

const std::vector<std::string>& supported_versions() {
  static const std::vector<std::string> kVersions = {"2025-06-18", "2025-03-26", "2024-11-05"};
  return kVersions;
}

}  // namespace

ordered_json JsonRpcServer::dispatch(const std::string& method, const ordered_json& params) {
  if (method == "initialize") {
    std::string version = supported_versions().front();
    if (params.is_object() && params.contains("protocolVersion") &&
        params["protocolVersion"].is_string()) {
      auto requested = params["protocolVersion"].get<std::string>();
      for (const auto& v : supported_versions()) {
        if (v == requested) version = v;
      }
    }
    return {{"protocolVersion", version},
            {"capabilities", {{"tools", {{"listChanged", false}}}}},
            {"serverInfo", {{"name", options_.server_name}, {"version", options_.server_version}}}};
  }
  if (method == "ping") return ordered_json::object();
  if (method == "tools/list") {
    ordered_json tools = ordered_json::array();
    for (const auto& t : tools_.list_tools()) tools.push_back(t.to_json());
    return {{"tools", std::move(tools)}};
  }
  if (method == "tools/call") {
    if (!params.is_object() || !params.contains("name") || !params["name"].is_string()) {
      throw RpcError{kInvalidParams, "tools/call requires a string 'name'"};
    }
    ordered_json args = params.value("arguments", ordered_json::object());
    try {
      return tools_.call_tool(params["name"].get<std::string>(), args).result;
    } catch (const UnknownToolError& e) {
      throw RpcError{kInvalidParams, e.what()};
    } catch (const InvalidArgumentsError& e) {
      throw RpcError{kInvalidParams, e.what()};
    }
  }
  throw RpcError{kMethodNotFound, "method not found: " + method};
}

std::optional<ordered_json> JsonRpcServer::handle_message(const ordered_json& message) {
  if (!message.is_object() || message.value("jsonrpc", "") != "2.0" ||
      !message.contains("method") || !message["method"].is_string()) {
    ordered_json id = message.is_object() && message.contains("id") ? message["id"] : nullptr;
    return error_response(id, kInvalidRequest, "invalid request");
  }
  const bool notification = !message.contains("id");
  ordered_json id = notification ? ordered_json(nullptr) : message["id"];
  std::string method = message["method"].get<std::string>();
  ordered_json params = message.value("params", ordered_json::object());
  try {
    ordered_json result = dispatch(method, params);
    if (notification) return std::nullopt;
    return ordered_json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(result)}};
  } catch (const RpcError& e) {
    if (notification) return std::nullopt;
    return error_response(id, e.code, e.message);
  } catch (const std::exception& e) {
    spdlog::error("tool server: {} failed: {}", method, e.what());
    if (notification) return std::nullopt;
    return error_response(id, kInternalError, e.what());
  }
}

std::optional<ordered_json> JsonRpcServer::handle_line(const std::string& line) {
  ordered_json message;
  try {
    message = ordered_json::parse(line);
  } catch (const ordered_json::exception&) {
    return error_response(nullptr, kParseError, "parse error");
  }
  return handle_message(message);
}

void JsonRpcServer::serve(std::istream& in, std::ostream& out) {
  std::mutex write_mu;
  auto write = [&](const ordered_json& response) {
    std::string frame = response.dump() + "\n";
    std::lock_guard lock(write_mu);
    out << frame;
    out.flush();
  };

  std::counting_semaphore<> slots(static_cast<std::ptrdiff_t>(
      std::max<std::size_t>(1, options_.max_concurrent_calls)));
  std::vector<std::jthread> workers;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    bool concurrent = line.find("\"tools/call\"") != std::string::npos;
    if (!concurrent) {
      if (auto resp = handle_line(line)) write(*resp);
      continue;
    }
    slots.acquire();
    workers.emplace_back([this, &write, &slots, frame = line] {
      if (auto resp = handle_line(frame)) write(*resp);
      slots.release();
    });
  }
  workers.clear();
}

}  // namespace metastd
