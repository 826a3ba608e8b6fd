#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metastd/http.hpp"
#include "metastd/record.hpp"
#include "metastd/resolver.hpp"
#include "metastd/tool_server.hpp"

namespace metastd {

std::string_view agent_system_prompt();
std::string_view baseline_system_prompt();
std::string_view prompt_version();

enum class ChatRole { kSystem, kUser, kModel, kToolResult };
std::string_view to_string(ChatRole role);

struct ToolCallRequest {
  std::string id;
  std::string name;
  ordered_json arguments = ordered_json::object();
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatTurn {
  ChatRole role = ChatRole::kUser;
  std::string content;
  std::vector<ToolCallRequest> tool_calls;
  // Set on tool-result turns.
  std::optional<std::string> tool_call_id;
  std::optional<std::string> tool_name;
};

struct ChatReply {
  std::string content;
  std::vector<ToolCallRequest> tool_calls;
  std::optional<TokenUsage> usage;
};

// A chat model: messages in, either tool-call requests or final text out.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatReply complete(const std::vector<ChatTurn>& messages,
                             const std::vector<ToolDescriptor>& tools) = 0;
};

// Replays fixed replies in order and records what it was sent.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ChatReply> replies) : replies_(std::move(replies)) {}

  // {"replies": [{"content": "...", "tool_calls": [{"id", "name", "arguments"}]}]}
  static std::vector<ChatReply> load_script(const ordered_json& script);

  ChatReply complete(const std::vector<ChatTurn>& messages,
                     const std::vector<ToolDescriptor>& tools) override;

  std::size_t calls() const;
  std::vector<std::vector<ChatTurn>> requests() const;
  std::vector<std::size_t> tools_offered() const;

 private:
  mutable std::mutex mu_;
  std::vector<ChatReply> replies_;
  std::size_t next_ = 0;
  std::vector<std::vector<ChatTurn>> requests_;
  std::vector<std::size_t> tools_offered_;
};

// Replies with the legacy record from the first user turn unchanged and never
// requests tools.
class EchoBackend : public ChatBackend {
 public:
  ChatReply complete(const std::vector<ChatTurn>& messages,
                     const std::vector<ToolDescriptor>& tools) override;
};

struct ChatBackendConfig {
  std::string endpoint = "https://api.openai.com/v1";
  std::string model;
  std::string api_key_env = "OPENAI_API_KEY";
  std::optional<double> temperature = 0.0;
  std::chrono::milliseconds request_timeout{120000};
};

// Chat-completions style JSON over HTTP.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(ChatBackendConfig config, std::string api_key, HttpTransport& transport,
                  RetryPolicy retry = {})
      : config_(std::move(config)),
        api_key_(std::move(api_key)),
        transport_(transport),
        retry_(std::move(retry)) {}

  ChatReply complete(const std::vector<ChatTurn>& messages,
                     const std::vector<ToolDescriptor>& tools) override;

  ordered_json build_request(const std::vector<ChatTurn>& messages,
                             const std::vector<ToolDescriptor>& tools) const;
  static ChatReply parse_response(std::string_view body);

 private:
  ChatBackendConfig config_;
  std::string api_key_;
  HttpTransport& transport_;
  RetryPolicy retry_;
};

struct AgentLimits {
  int max_tool_iterations = 25;
  std::chrono::milliseconds per_call_timeout{60000};
  std::chrono::milliseconds total_budget{600000};

  // Throws ConfigError unless every limit is positive.
  void validate() const;
};

struct AgentOutput {
  MetadataRecord record;
  std::set<std::string> flagged;
};

// Extracts the one top-level JSON object in `text`, ignoring surrounding
// prose and code fences. An object of the form {"record": {...},
// "flagged": [...]} is unwrapped. Throws ParseError.
AgentOutput parse_final_output_ex(std::string_view text);
MetadataRecord parse_final_output(std::string_view text);

// One structured log line per transcript turn.
struct TurnLog {
  std::size_t index = 0;
  ChatRole role = ChatRole::kUser;
  std::string content_digest;
  std::string tool_name;
  ordered_json tool_args;
  double latency_ms = 0;
  std::optional<TokenUsage> usage;

  ordered_json to_json() const;
};

struct AgentRun {
  bool ok = false;
  std::string error;
  CorrectionResult result;
  std::vector<ChatTurn> transcript;
  std::vector<TurnLog> log;
  std::size_t model_calls = 0;
  std::size_t tool_calls = 0;
  std::size_t cache_hits = 0;
};

// Status of each output field relative to the legacy record: flagged when the
// model flagged it and kept the legacy value, unchanged when equal to the
// legacy value, ontology-resolved when equal to a retrieved candidate label,
// inferred-from-record when the legacy value was absent or empty, normalized
// otherwise. With a template, output fields it lacks become extra_fields.
CorrectionResult derive_result(const MetadataRecord& legacy, const AgentOutput& output,
                               const TemplateSpec* spec,
                               const std::vector<TermCandidate>& retrieved);

std::string agent_user_prompt(const MetadataRecord& record, const std::string& template_id);
std::string baseline_user_prompt(const MetadataRecord& record,
                                 const std::vector<std::string>& field_names,
                                 const std::map<std::string, std::string>& ontology_names);

inline constexpr std::string_view kReprompt = "Return only the record object.";

AgentRun run_agent(const MetadataRecord& record, const std::string& template_id,
                   ChatBackend& backend, ToolAccess& tools, const AgentLimits& limits = {});

AgentRun run_baseline(const MetadataRecord& record, const std::vector<std::string>& field_names,
                      const std::map<std::string, std::string>& ontology_names,
                      ChatBackend& backend);

}  // namespace metastd
