#include "metastd/agent.hpp"

#include <spdlog/spdlog.h>

#include <future>

#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

std::string_view to_string(ChatRole role) {
  switch (role) {
    case ChatRole::kSystem: return "system";
    case ChatRole::kUser: return "user";
    case ChatRole::kModel: return "model";
    case ChatRole::kToolResult: return "tool-result";
  }
  return "user";
}

// ---------------------------------------------------------------------------
// Backends

std::vector<ChatReply> ScriptedBackend::load_script(const ordered_json& script) {
  std::vector<ChatReply> replies;
  for (const auto& r : script.at("replies")) {
    ChatReply reply;
    reply.content = r.value("content", "");
    if (auto calls = r.find("tool_calls"); calls != r.end()) {
      for (const auto& c : *calls) {
        reply.tool_calls.push_back({c.value("id", ""), c.at("name").get<std::string>(),
                                    c.value("arguments", ordered_json::object())});
      }
    }
    replies.push_back(std::move(reply));
  }
  return replies;
}

ChatReply ScriptedBackend::complete(const std::vector<ChatTurn>& messages,
                                    const std::vector<ToolDescriptor>& tools) {
  std::lock_guard lock(mu_);
  requests_.push_back(messages);
  tools_offered_.push_back(tools.size());
  if (next_ >= replies_.size()) throw Error("scripted backend ran out of replies");
  return replies_[next_++];
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::vector<std::vector<ChatTurn>> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::vector<std::size_t> ScriptedBackend::tools_offered() const {
  std::lock_guard lock(mu_);
  return tools_offered_;
}

ChatReply EchoBackend::complete(const std::vector<ChatTurn>& messages,
                                const std::vector<ToolDescriptor>&) {
  for (const auto& m : messages) {
    if (m.role == ChatRole::kUser) {
      return {record_to_json(parse_final_output(m.content)).dump(), {}, std::nullopt};
    }
  }
  throw Error("echo backend: no user turn");
}

namespace {

std::string api_role(ChatRole role) {
  switch (role) {
    case ChatRole::kSystem: return "system";
    case ChatRole::kUser: return "user";
    case ChatRole::kModel: return "assistant";
    case ChatRole::kToolResult: return "tool";
  }
  return "user";
}

}  // namespace

ordered_json HttpChatBackend::build_request(const std::vector<ChatTurn>& messages,
                                            const std::vector<ToolDescriptor>& tools) const {
  ordered_json msgs = ordered_json::array();
  for (const auto& m : messages) {
    ordered_json j = {{"role", api_role(m.role)}, {"content", m.content}};
    if (!m.tool_calls.empty()) {
      ordered_json calls = ordered_json::array();
      for (const auto& c : m.tool_calls) {
        calls.push_back({{"id", c.id},
                         {"type", "function"},
                         {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
      }
      j["tool_calls"] = std::move(calls);
      if (m.content.empty()) j["content"] = nullptr;
    }
    if (m.tool_call_id) j["tool_call_id"] = *m.tool_call_id;
    msgs.push_back(std::move(j));
  }
  ordered_json body = {{"model", config_.model}, {"messages", std::move(msgs)}};
  if (config_.temperature) body["temperature"] = *config_.temperature;
  if (!tools.empty()) {
    ordered_json defs = ordered_json::array();
    for (const auto& t : tools) {
      defs.push_back({{"type", "function"},
                      {"function", {{"name", t.name},
                                    {"description", t.description},
                                    {"parameters", t.input_schema}}}});
    }
    body["tools"] = std::move(defs);
  }
  return body;
}

ChatReply HttpChatBackend::parse_response(std::string_view body) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(body);
  } catch (const ordered_json::exception& e) {
    throw MalformedPayloadError(std::string("chat response is not JSON: ") + e.what());
  }
  try {
    const auto& msg = doc.at("choices").at(0).at("message");
    ChatReply reply;
    if (msg.contains("content") && msg["content"].is_string()) {
      reply.content = msg["content"].get<std::string>();
    }
    if (auto calls = msg.find("tool_calls"); calls != msg.end() && calls->is_array()) {
      for (const auto& c : *calls) {
        const auto& fn = c.at("function");
        ordered_json args = ordered_json::object();
        if (auto a = fn.find("arguments"); a != fn.end()) {
          args = a->is_string() ? ordered_json::parse(a->get<std::string>()) : *a;
        }
        reply.tool_calls.push_back({c.value("id", ""), fn.at("name").get<std::string>(), args});
      }
    }
    if (auto u = doc.find("usage"); u != doc.end() && u->is_object()) {
      reply.usage = TokenUsage{u->value("prompt_tokens", 0L), u->value("completion_tokens", 0L)};
    }
    return reply;
  } catch (const ordered_json::exception& e) {
    throw MalformedPayloadError(std::string("unexpected chat response shape: ") + e.what());
  }
}

ChatReply HttpChatBackend::complete(const std::vector<ChatTurn>& messages,
                                    const std::vector<ToolDescriptor>& tools) {
  HttpRequest req;
  req.method = "POST";
  req.url = join_url(config_.endpoint, "/chat/completions");
  req.headers = {{"Authorization", "Bearer " + api_key_}};
  req.body = build_request(messages, tools).dump();
  req.timeout = config_.request_timeout;
  return parse_response(send_with_retry(transport_, req, retry_).body);
}

void AgentLimits::validate() const {
  if (max_tool_iterations <= 0 || per_call_timeout.count() <= 0 || total_budget.count() <= 0) {
    throw ConfigError("agent limits must all be positive");
  }
}

// ---------------------------------------------------------------------------
// Final output parsing

namespace {

// Offsets of balanced top-level {...} spans, honoring JSON string escapes.
std::vector<std::string_view> brace_spans(std::string_view text) {
  std::vector<std::string_view> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      ++i;
      continue;
    }
    int depth = 0;
    bool in_string = false;
    std::size_t j = i;
    for (; j < text.size(); ++j) {
      char c = text[j];
      if (in_string) {
        if (c == '\\') {
          ++j;
        } else if (c == '"') {
          in_string = false;
        }
      } else if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        break;
      }
    }
    if (j >= text.size()) break;
    std::string_view span = text.substr(i, j - i + 1);
    if (ordered_json::accept(span)) {
      spans.push_back(span);
      i = j + 1;
    } else {
      ++i;
    }
  }
  return spans;
}

}  // namespace

AgentOutput parse_final_output_ex(std::string_view text) {
  auto spans = brace_spans(text);
  if (spans.empty()) throw ParseError("model output contains no record object");
  if (spans.size() > 1) {
    throw ParseError("model output contains " + std::to_string(spans.size()) + " objects");
  }
  ordered_json doc = ordered_json::parse(spans.front());
  AgentOutput out;
  const ordered_json* body = &doc;
  if (auto rec = doc.find("record"); rec != doc.end() && rec->is_object()) {
    body = &*rec;
    if (auto fl = doc.find("flagged"); fl != doc.end()) {
      if (fl->is_array()) {
        for (const auto& f : *fl) {
          if (f.is_string()) out.flagged.insert(f.get<std::string>());
        }
      } else if (fl->is_object()) {
        for (const auto& [k, v] : fl->items()) out.flagged.insert(k);
      }
    }
  }
  for (const auto& [name, value] : body->items()) {
    try {
      out.record.add(name, coerce_to_text(value));
    } catch (const ParseError& e) {
      throw ParseError("field '" + name + "': " + e.what());
    }
  }
  return out;
}

MetadataRecord parse_final_output(std::string_view text) {
  return parse_final_output_ex(text).record;
}

// ---------------------------------------------------------------------------
// Result derivation

namespace {

Resolution derive_one(const std::string& field, const std::string& value,
                      const std::string* legacy, std::optional<std::string> source,
                      bool flagged, const std::set<std::string>& labels) {
  Resolution r{field, value, ResolutionStatus::kNormalized, std::nullopt, std::move(source)};
  if (flagged) {
    if (legacy && *legacy == value) {
      r.status = ResolutionStatus::kFlaggedForReview;
      r.note = "flagged by model";
      return r;
    }
    r.note = "flag ignored: value differs from the legacy value";
  }
  if (legacy && *legacy == value) {
    r.status = ResolutionStatus::kUnchanged;
  } else if (labels.contains(value)) {
    r.status = ResolutionStatus::kOntologyResolved;
  } else if ((!legacy || text::trim(*legacy).empty()) && !text::trim(value).empty()) {
    r.status = ResolutionStatus::kInferredFromRecord;
  }
  return r;
}

void append_note(Resolution& r, const std::string& note) {
  r.note = r.note ? *r.note + "; " + note : note;
}

}  // namespace

CorrectionResult derive_result(const MetadataRecord& legacy, const AgentOutput& output,
                               const TemplateSpec* spec,
                               const std::vector<TermCandidate>& retrieved) {
  std::set<std::string> labels;
  for (const auto& c : retrieved) labels.insert(c.preferred_label);

  CorrectionResult result;
  result.record_id = legacy.id();
  if (!spec) {
    for (const auto& f : output.record.fields()) {
      const std::string* lv = legacy.find(f.name);
      result.resolutions.push_back(
          derive_one(f.name, f.value, lv, lv ? std::optional(f.name) : std::nullopt,
                     output.flagged.contains(f.name), labels));
    }
    return result;
  }

  FieldMapping mapping = map_legacy_fields(legacy, *spec);
  for (std::size_t i = 0; i < spec->fields().size(); ++i) {
    const FieldSpec& fs = spec->fields()[i];
    const std::string* value = output.record.find(fs.name);
    if (!value) continue;
    const auto& mapped = mapping.fields[i];
    const std::string* lv = mapped.legacy_field ? legacy.find(*mapped.legacy_field) : nullptr;
    Resolution r = derive_one(fs.name, *value, lv, mapped.legacy_field,
                              output.flagged.contains(fs.name), labels);
    if (r.status != ResolutionStatus::kFlaggedForReview && !value->empty()) {
      if (fs.ontology()) {
        if (r.status != ResolutionStatus::kUnchanged &&
            r.status != ResolutionStatus::kOntologyResolved) {
          append_note(r, "value not among retrieved candidates");
        }
      } else {
        Resolution check = normalize_value(fs, *value);
        if (check.status == ResolutionStatus::kFlaggedForReview) {
          append_note(r, "fails template constraint: " + check.note.value_or(""));
        }
      }
    }
    result.resolutions.push_back(std::move(r));
  }
  for (const auto& f : output.record.fields()) {
    if (spec->find(f.name)) continue;
    Resolution r = derive_one(f.name, f.value, legacy.find(f.name), std::nullopt,
                              output.flagged.contains(f.name), labels);
    append_note(r, "field not in template");
    result.extra_fields.push_back(std::move(r));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prompts

std::string agent_user_prompt(const MetadataRecord& record, const std::string& template_id) {
  return "Template identifier: " + template_id + "\n\nLegacy metadata record:\n" +
         record_to_json(record).dump(2, ' ', false) + "\n";
}

std::string baseline_user_prompt(const MetadataRecord& record,
                                 const std::vector<std::string>& field_names,
                                 const std::map<std::string, std::string>& ontology_names) {
  std::string prompt = "Target field names:\n";
  for (const auto& name : field_names) {
    prompt += "- " + name;
    if (auto it = ontology_names.find(name); it != ontology_names.end()) {
      prompt += " (ontology: " + it->second + ")";
    }
    prompt += "\n";
  }
  prompt += "\nLegacy metadata record:\n" + record_to_json(record).dump(2, ' ', false) +
            "\n\nReturn the corrected record as one JSON object.\n";
  return prompt;
}

// ---------------------------------------------------------------------------
// Loops

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

class RunRecorder {
 public:
  explicit RunRecorder(AgentRun& run) : run_(run) {}

  void add(ChatTurn turn, double latency_ms = 0, std::optional<TokenUsage> usage = {}) {
    TurnLog log;
    log.index = run_.transcript.size();
    log.role = turn.role;
    log.content_digest = text::sha256_hex(turn.content);
    log.latency_ms = latency_ms;
    log.usage = usage;
    if (turn.role == ChatRole::kToolResult) {
      log.tool_name = turn.tool_name.value_or("");
    } else if (!turn.tool_calls.empty()) {
      ordered_json calls = ordered_json::array();
      for (const auto& c : turn.tool_calls) {
        calls.push_back({{"name", c.name}, {"arguments", c.arguments}});
      }
      log.tool_args = std::move(calls);
    }
    run_.log.push_back(std::move(log));
    run_.transcript.push_back(std::move(turn));
  }

 private:
  AgentRun& run_;
};

struct PendingCall {
  ToolCallRequest request;
  std::future<ToolOutcome> outcome;
  Clock::time_point started;
};

ToolOutcome invoke_tool(ToolAccess& tools, const ToolCallRequest& call) {
  try {
    return tools.call_tool(call.name, call.arguments);
  } catch (const Error& e) {
    // Invalid requests go back to the model so it can correct itself.
    ToolOutcome out;
    out.is_error = true;
    out.result = {{"content", ordered_json::array({{{"type", "text"}, {"text", e.what()}}})},
                  {"isError", true}};
    return out;
  }
}

std::string tool_result_text(const ToolOutcome& outcome) {
  const auto& content = outcome.result.at("content");
  std::string text;
  for (const auto& block : content) {
    if (block.value("type", "") == "text") text += block.value("text", "");
  }
  return text;
}

std::optional<TemplateSpec> template_from_result(const ordered_json& result) {
  auto sc = result.find("structuredContent");
  if (sc == result.end() || !sc->contains("template")) return std::nullopt;
  try {
    return parse_template((*sc)["template"].dump());
  } catch (const Error& e) {
    spdlog::warn("agent: retrieved template does not parse: {}", e.what());
    return std::nullopt;
  }
}

}  // namespace

AgentRun run_agent(const MetadataRecord& record, const std::string& template_id,
                   ChatBackend& backend, ToolAccess& tools, const AgentLimits& limits) {
  limits.validate();
  AgentRun run;
  run.result.record_id = record.id();
  RunRecorder rec(run);
  rec.add({ChatRole::kSystem, std::string(agent_system_prompt()), {}, {}, {}});
  rec.add({ChatRole::kUser, agent_user_prompt(record, template_id), {}, {}, {}});

  const auto started = Clock::now();
  const std::vector<ToolDescriptor> offered = tools.list_tools();
  std::vector<TermCandidate> retrieved;
  std::optional<TemplateSpec> spec;
  std::vector<std::future<ToolOutcome>> abandoned;
  int iterations = 0;
  bool reprompted = false;

  while (true) {
    if (Clock::now() - started > limits.total_budget) {
      run.error = "total time budget exhausted";
      return run;
    }
    auto t0 = Clock::now();
    ChatReply reply;
    try {
      reply = backend.complete(run.transcript, offered);
    } catch (const std::exception& e) {
      run.error = std::string("model call failed: ") + e.what();
      return run;
    }
    ++run.model_calls;
    double latency = ms_since(t0);

    if (!reply.tool_calls.empty()) {
      if (iterations >= limits.max_tool_iterations) {
        rec.add({ChatRole::kModel, reply.content, reply.tool_calls, {}, {}}, latency, reply.usage);
        run.error = "tool iteration budget exhausted after " + std::to_string(iterations);
        return run;
      }
      ++iterations;
      for (std::size_t i = 0; i < reply.tool_calls.size(); ++i) {
        auto& c = reply.tool_calls[i];
        if (c.id.empty()) c.id = "call_" + std::to_string(iterations) + "_" + std::to_string(i);
      }
      rec.add({ChatRole::kModel, reply.content, reply.tool_calls, {}, {}}, latency, reply.usage);

      std::vector<PendingCall> pending;
      for (const auto& call : reply.tool_calls) {
        pending.push_back({call,
                           std::async(std::launch::async,
                                      [&tools, call] { return invoke_tool(tools, call); }),
                           Clock::now()});
      }
      for (auto& p : pending) {
        ToolOutcome outcome;
        if (p.outcome.wait_until(p.started + limits.per_call_timeout) ==
            std::future_status::ready) {
          outcome = p.outcome.get();
        } else {
          outcome.is_error = true;
          outcome.result = {{"content", ordered_json::array({{{"type", "text"},
                                                              {"text", "tool call timed out"}}})},
                            {"isError", true}};
          abandoned.push_back(std::move(p.outcome));
        }
        ++run.tool_calls;
        if (outcome.from_cache) ++run.cache_hits;
        if (!outcome.is_error) {
          for (auto& c : candidates_from_tool_result(outcome.result)) retrieved.push_back(std::move(c));
          if (p.request.name == kGetTemplateTool) {
            if (auto t = template_from_result(outcome.result)) spec = std::move(t);
          }
        }
        rec.add({ChatRole::kToolResult, tool_result_text(outcome), {}, p.request.id,
                 p.request.name},
                ms_since(p.started));
      }
      continue;
    }

    rec.add({ChatRole::kModel, reply.content, {}, {}, {}}, latency, reply.usage);
    try {
      AgentOutput output = parse_final_output_ex(reply.content);
      output.record.set_id(record.id());
      run.result = derive_result(record, output, spec ? &*spec : nullptr, retrieved);
      run.ok = true;
      return run;
    } catch (const ParseError& e) {
      if (reprompted) {
        run.error = std::string("unparseable final output: ") + e.what();
        return run;
      }
      reprompted = true;
      rec.add({ChatRole::kUser, std::string(kReprompt), {}, {}, {}});
    }
  }
}

AgentRun run_baseline(const MetadataRecord& record, const std::vector<std::string>& field_names,
                      const std::map<std::string, std::string>& ontology_names,
                      ChatBackend& backend) {
  AgentRun run;
  run.result.record_id = record.id();
  RunRecorder rec(run);
  rec.add({ChatRole::kSystem, std::string(baseline_system_prompt()), {}, {}, {}});
  rec.add({ChatRole::kUser, baseline_user_prompt(record, field_names, ontology_names), {}, {}, {}});

  for (int attempt = 0; attempt < 2; ++attempt) {
    auto t0 = Clock::now();
    ChatReply reply;
    try {
      reply = backend.complete(run.transcript, {});
    } catch (const std::exception& e) {
      run.error = std::string("model call failed: ") + e.what();
      return run;
    }
    ++run.model_calls;
    rec.add({ChatRole::kModel, reply.content, {}, {}, {}}, ms_since(t0), reply.usage);
    if (!reply.tool_calls.empty()) {
      run.error = "baseline model requested tools";
      return run;
    }
    try {
      AgentOutput output = parse_final_output_ex(reply.content);
      output.record.set_id(record.id());
      run.result = derive_result(record, output, nullptr, {});
      run.ok = true;
      return run;
    } catch (const ParseError& e) {
      if (attempt == 1) {
        run.error = std::string("unparseable final output: ") + e.what();
        return run;
      }
      rec.add({ChatRole::kUser, std::string(kReprompt), {}, {}, {}});
    }
  }
  return run;
}

ordered_json TurnLog::to_json() const {
  ordered_json j = {{"turn", index},
                    {"role", to_string(role)},
                    {"content_sha256", content_digest},
                    {"latency_ms", latency_ms}};
  if (!tool_name.empty()) j["tool"] = tool_name;
  if (!tool_args.is_null()) j["tool_calls"] = tool_args;
  if (usage) {
    j["usage"] = {{"prompt_tokens", usage->prompt_tokens},
                  {"completion_tokens", usage->completion_tokens}};
  }
  return j;
}

}  // namespace metastd
