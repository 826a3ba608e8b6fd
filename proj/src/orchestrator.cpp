#include "metastd/orchestrator.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "metastd/errors.hpp"
#include "metastd/text.hpp"

namespace metastd {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kAgent: return "agent";
    case RunMode::kBaseline: return "baseline";
    case RunMode::kDeterministic: return "deterministic";
  }
  return "deterministic";
}

std::optional<RunMode> run_mode_from_string(std::string_view s) {
  for (auto m : {RunMode::kAgent, RunMode::kBaseline, RunMode::kDeterministic}) {
    if (to_string(m) == s) return m;
  }
  return std::nullopt;
}

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

}  // namespace

ServiceStack::ServiceStack(const ServiceConfig& config)
    : cache_(std::make_unique<ResponseCache>(config.cache_enabled)) {
  if (config.cache_file && config.cache_enabled) cache_->attach_file(*config.cache_file);
  if (config.mock_fixtures) {
    mocked_ = true;
    mocks_ = load_mock_services(*config.mock_fixtures);
    wire(*mocks_.templates, *mocks_.terminology);
    return;
  }
  if (config.max_inflight_upstream < 1) throw ConfigError("--max-inflight-upstream must be >= 1");
  transport_ = std::make_unique<HttplibTransport>(
      std::make_shared<InflightLimiter>(config.max_inflight_upstream));
  CedarConfig cedar = config.cedar;
  if (cedar.api_key.empty()) cedar.api_key = env_or_empty("CEDAR_API_KEY");
  BioPortalConfig bioportal = config.bioportal;
  if (bioportal.api_key.empty()) bioportal.api_key = env_or_empty("BIOPORTAL_API_KEY");
  template_source_ = std::make_unique<CedarClient>(cedar, *transport_);
  search_backend_ = std::make_unique<BioPortalBackend>(bioportal, *transport_);
  wire(*template_source_, *search_backend_);
}

ServiceStack::ServiceStack(TemplateSource& templates, SearchBackend& search, bool cache_enabled)
    : mocked_(true), cache_(std::make_unique<ResponseCache>(cache_enabled)) {
  wire(templates, search);
}

void ServiceStack::wire(TemplateSource& templates, SearchBackend& search) {
  template_service_ = std::make_unique<TemplateService>(templates, *cache_);
  terminology_ = std::make_unique<TerminologyClient>(search, *cache_);
  tools_ = std::make_unique<ToolService>(*template_service_, *terminology_);
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (parallelism < 1) throw ConfigError("parallelism must be at least 1");
  if (input.empty() || !fs::exists(input)) {
    throw ConfigError("input '" + input.string() + "' does not exist");
  }
  if (output_dir.empty()) throw ConfigError("output directory is required");
  if (template_file && !fs::exists(*template_file)) {
    throw ConfigError("template file '" + template_file->string() + "' does not exist");
  }
  if (mode == RunMode::kAgent && template_id.empty()) {
    throw ConfigError("agent mode requires --template-id");
  }
  if (!template_file && template_id.empty()) {
    throw ConfigError("a template file or template id is required");
  }
  if (mode != RunMode::kDeterministic) {
    limits.validate();
    if (backend_kind == "http") {
      if (backend.model.empty()) throw ConfigError("--model is required for the http backend");
      if (env_or_empty(backend.api_key_env.c_str()).empty()) {
        throw ConfigError("environment variable " + backend.api_key_env + " is not set");
      }
    } else if (backend_kind != "echo" && !backend_kind.starts_with("script:")) {
      throw ConfigError("unknown backend '" + backend_kind + "'");
    }
  }
  if (!services.mock_fixtures) {
    bool needs_cedar = mode == RunMode::kAgent || !template_file;
    if (needs_cedar && env_or_empty("CEDAR_API_KEY").empty() && services.cedar.api_key.empty()) {
      throw ConfigError("CEDAR_API_KEY is not set and no mock fixtures were given");
    }
    if (mode != RunMode::kBaseline && env_or_empty("BIOPORTAL_API_KEY").empty() &&
        services.bioportal.api_key.empty()) {
      throw ConfigError("BIOPORTAL_API_KEY is not set and no mock fixtures were given");
    }
  }
  if (sample && *sample == 0) throw ConfigError("--sample must be positive");
}

ordered_json RunConfig::to_json() const {
  auto path_or_null = [](const std::optional<fs::path>& p) {
    return p ? ordered_json(p->string()) : ordered_json(nullptr);
  };
  ordered_json j = {
      {"mode", to_string(mode)},
      {"template_id", template_id},
      {"template_file", path_or_null(template_file)},
      {"input", input.string()},
      {"output_dir", output_dir.string()},
      {"id_key", id_key},
      {"parallelism", parallelism},
      {"seed", seed},
      {"sample", sample ? ordered_json(*sample) : ordered_json(nullptr)},
      {"mock_fixtures", path_or_null(services.mock_fixtures)},
      {"cache_file", path_or_null(services.cache_file)},
      {"cache_enabled", services.cache_enabled},
      {"cedar_endpoint", services.cedar.endpoint},
      {"bioportal_endpoint", services.bioportal.endpoint},
  };
  if (mode != RunMode::kDeterministic) {
    j["backend"] = {{"kind", backend_kind},
                    {"endpoint", backend.endpoint},
                    {"model", backend.model},
                    {"temperature", backend.temperature ? ordered_json(*backend.temperature)
                                                        : ordered_json(nullptr)},
                    {"prompt_version", prompt_version()}};
    j["limits"] = {{"max_tool_iterations", limits.max_tool_iterations},
                   {"per_call_timeout_ms", limits.per_call_timeout.count()},
                   {"total_budget_ms", limits.total_budget.count()}};
  }
  return j;
}

std::string RunConfig::digest() const {
  // Parallelism never changes outputs, so it stays out of the digest.
  ordered_json j = to_json();
  j.erase("parallelism");
  return text::sha256_hex(j.dump());
}

ordered_json RecordOutcome::to_json() const {
  ordered_json j = {{"type", "record"},
                    {"record_id", record_id},
                    {"output", output_name},
                    {"status", skipped ? "skipped" : ok ? "ok" : "error"},
                    {"elapsed_ms", elapsed_ms},
                    {"tool_calls", tool_calls},
                    {"cache_hits", cache_hits},
                    {"flagged", flagged}};
  if (!error.empty()) j["error"] = error;
  return j;
}

std::size_t BatchSummary::errors() const {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.ok; }));
}

std::string output_name_for(std::string_view record_id) {
  std::string out;
  for (char c : record_id) {
    bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                c == '-' || c == '_' || c == '.';
    out.push_back(safe ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

BackendFactory backend_factory_for(const RunConfig& config, HttpTransport* transport) {
  if (config.backend_kind == "echo") {
    return [] { return std::make_unique<EchoBackend>(); };
  }
  if (config.backend_kind.starts_with("script:")) {
    fs::path script = config.backend_kind.substr(7);
    auto replies = ScriptedBackend::load_script(ordered_json::parse(read_file(script)));
    return [replies] { return std::make_unique<ScriptedBackend>(replies); };
  }
  std::shared_ptr<HttpTransport> owned;
  if (!transport) {
    owned = std::make_shared<HttplibTransport>();
    transport = owned.get();
  }
  auto shared = std::make_shared<HttpChatBackend>(
      config.backend, env_or_empty(config.backend.api_key_env.c_str()), *transport);
  // Each handle keeps the shared transport alive.
  struct Handle : ChatBackend {
    std::shared_ptr<HttpChatBackend> inner;
    std::shared_ptr<HttpTransport> keep;
    ChatReply complete(const std::vector<ChatTurn>& m,
                       const std::vector<ToolDescriptor>& t) override {
      return inner->complete(m, t);
    }
  };
  return [shared, owned] {
    auto h = std::make_unique<Handle>();
    h->inner = shared;
    h->keep = owned;
    return h;
  };
}

namespace {

// Per-record lookup counters over the shared terminology client.
class CountingTermSearch : public TermSearch {
 public:
  explicit CountingTermSearch(TermSearch& inner) : inner_(inner) {}

  SearchResult search_ontology(const std::string& a, const std::string& q) override {
    return count(inner_.search_ontology(a, q));
  }
  SearchResult search_branch(const std::string& a, const std::string& b,
                             const std::string& q) override {
    return count(inner_.search_branch(a, b, q));
  }

  std::size_t lookups = 0;
  std::size_t hits = 0;

 private:
  SearchResult count(SearchResult r) {
    ++lookups;
    if (r.from_cache) ++hits;
    return r;
  }
  TermSearch& inner_;
};

class LineWriter {
 public:
  explicit LineWriter(const fs::path& path) : out_(path, std::ios::binary | std::ios::app) {
    if (!out_) throw ConfigError("cannot open " + path.string());
  }
  void write(const ordered_json& j) {
    std::string line = j.dump() + "\n";
    std::lock_guard lock(mu_);
    out_ << line;
    out_.flush();
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
};

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

TemplateSpec load_template(const RunConfig& config, ServiceStack& services) {
  if (config.template_file) return parse_template(read_file(*config.template_file));
  return parse_template(services.templates().fetch_template(config.template_id).payload);
}

}  // namespace

BatchSummary run_batch(const RunConfig& config, ServiceStack& services,
                       const BackendFactory& make_backend) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  BatchSummary summary;
  summary.config_digest = config.digest();

  RecordParseOptions parse_options;
  parse_options.id_key = config.id_key;
  std::vector<MetadataRecord> records;
  TemplateSpec spec;
  try {
    records = load_records(config.input, parse_options);
    spec = load_template(config, services);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot start batch: ") + e.what());
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.sample && *config.sample < records.size()) {
    std::mt19937_64 rng(config.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(*config.sample);
    std::sort(order.begin(), order.end());
  }

  BackendFactory factory = make_backend;
  if (config.mode != RunMode::kDeterministic && !factory) {
    factory = backend_factory_for(config, services.transport());
  }

  fs::create_directories(config.output_dir / "records");
  LineWriter manifest(config.output_dir / "manifest.jsonl");
  std::unique_ptr<LineWriter> transcripts;
  if (config.mode != RunMode::kDeterministic) {
    fs::create_directories(config.output_dir / "logs");
    transcripts = std::make_unique<LineWriter>(config.output_dir / "logs" / "transcripts.jsonl");
  }
  manifest.write({{"type", "run"},
                  {"started_at", iso_now()},
                  {"config_digest", summary.config_digest},
                  {"config", config.to_json()},
                  {"records", order.size()}});

  std::vector<std::string> field_names;
  std::map<std::string, std::string> ontology_names;
  for (const auto& f : spec.fields()) {
    field_names.push_back(f.name);
    if (const auto* b = f.ontology()) ontology_names[f.name] = b->acronym;
  }

  summary.outcomes.resize(order.size());
  std::set<std::string> names_seen;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& o = summary.outcomes[k];
    o.record_id = records[order[k]].id();
    o.output_name = output_name_for(o.record_id);
    if (!names_seen.insert(o.output_name).second) {
      o.error = "output name '" + o.output_name + "' collides with an earlier record";
    }
  }

  auto process = [&](std::size_t k) {
    auto& o = summary.outcomes[k];
    const MetadataRecord& record = records[order[k]];
    auto t0 = std::chrono::steady_clock::now();
    const fs::path record_path = config.output_dir / "records" / (o.output_name + ".json");
    const fs::path review_path = config.output_dir / "records" / (o.output_name + ".review.json");
    if (!o.error.empty()) {
      // Collision detected up front.
    } else if (config.skip_existing && fs::exists(record_path)) {
      o.ok = true;
      o.skipped = true;
    } else {
      try {
        CorrectionResult result;
        if (config.mode == RunMode::kDeterministic) {
          CountingTermSearch counting(services.terminology());
          result = standardize_record(record, spec, counting);
          o.tool_calls = counting.lookups;
          o.cache_hits = counting.hits;
        } else {
          auto backend = factory();
          AgentRun run = config.mode == RunMode::kAgent
                             ? run_agent(record, config.template_id, *backend, services.tools(),
                                         config.limits)
                             : run_baseline(record, field_names, ontology_names, *backend);
          o.tool_calls = run.tool_calls;
          o.cache_hits = run.cache_hits;
          for (const auto& turn : run.log) {
            ordered_json line = turn.to_json();
            line["record_id"] = record.id();
            transcripts->write(line);
          }
          if (!run.ok) throw Error(run.error);
          result = std::move(run.result);
        }
        std::string body = serialize_record(result.to_record(), RecordFormat::kObject);
        std::string review = result.review_json().dump(2, ' ', false) + "\n";
        write_file(record_path, body);
        write_file(review_path, review);
        o.flagged = result.flagged().size();
        o.ok = true;
      } catch (const std::exception& e) {
        o.ok = false;
        o.error = e.what();
      }
    }
    o.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (!o.ok) spdlog::warn("record {}: {}", o.record_id, o.error);
    manifest.write(o.to_json());
  };

  std::atomic<std::size_t> next{0};
  std::size_t workers = std::min(config.parallelism, std::max<std::size_t>(1, order.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < order.size(); k = next++) process(k);
      });
    }
  }

  summary.upstream_calls = services.cache().upstream_calls();
  summary.cache_hits = services.cache().hits();
  summary.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  manifest.write({{"type", "summary"},
                  {"finished_at", iso_now()},
                  {"records", summary.outcomes.size()},
                  {"errors", summary.errors()},
                  {"upstream_calls", summary.upstream_calls},
                  {"cache_hits", summary.cache_hits},
                  {"elapsed_ms", summary.elapsed_ms}});
  return summary;
}

BatchSummary run_batch(const RunConfig& config) {
  config.validate();
  ServiceStack services(config.services);
  return run_batch(config, services);
}

}  // namespace metastd
