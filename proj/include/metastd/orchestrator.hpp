#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metastd/agent.hpp"
#include "metastd/cache.hpp"
#include "metastd/http.hpp"
#include "metastd/mock.hpp"
#include "metastd/resolver.hpp"
#include "metastd/template.hpp"
#include "metastd/terminology.hpp"
#include "metastd/tool_server.hpp"

namespace metastd {

enum class RunMode { kAgent, kBaseline, kDeterministic };
std::string_view to_string(RunMode mode);
std::optional<RunMode> run_mode_from_string(std::string_view s);

// Where template and terminology requests go, shared by every command.
struct ServiceConfig {
  std::optional<std::filesystem::path> mock_fixtures;
  std::optional<std::filesystem::path> cache_file;
  bool cache_enabled = true;
  int max_inflight_upstream = 8;
  CedarConfig cedar;
  BioPortalConfig bioportal;
};

// Owns the cache, transports, and clients; live or mocked per config.
class ServiceStack {
 public:
  // Reads CEDAR_API_KEY and BIOPORTAL_API_KEY when talking to live services.
  explicit ServiceStack(const ServiceConfig& config);
  // Wraps existing backends (tests).
  ServiceStack(TemplateSource& templates, SearchBackend& search, bool cache_enabled = true);

  ResponseCache& cache() { return *cache_; }
  TemplateService& templates() { return *template_service_; }
  TerminologyClient& terminology() { return *terminology_; }
  ToolService& tools() { return *tools_; }
  HttpTransport* transport() { return transport_.get(); }
  bool mocked() const noexcept { return mocked_; }

 private:
  void wire(TemplateSource& templates, SearchBackend& search);

  bool mocked_ = false;
  std::unique_ptr<ResponseCache> cache_;
  std::unique_ptr<HttpTransport> transport_;
  MockServices mocks_;
  std::unique_ptr<TemplateSource> template_source_;
  std::unique_ptr<SearchBackend> search_backend_;
  std::unique_ptr<TemplateService> template_service_;
  std::unique_ptr<TerminologyClient> terminology_;
  std::unique_ptr<ToolService> tools_;
};

struct RunConfig {
  RunMode mode = RunMode::kDeterministic;
  std::string template_id;
  std::optional<std::filesystem::path> template_file;
  std::filesystem::path input;
  std::filesystem::path output_dir;
  std::string id_key;
  std::size_t parallelism = 1;
  std::uint64_t seed = 0;
  // Process a seeded random subset of this many records.
  std::optional<std::size_t> sample;
  bool skip_existing = false;
  ServiceConfig services;
  // "http", "echo", or "script:<path>".
  std::string backend_kind = "http";
  ChatBackendConfig backend;
  AgentLimits limits;

  // Throws ConfigError.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  std::string digest() const;
};

struct RecordOutcome {
  std::string record_id;
  std::string output_name;
  bool ok = false;
  bool skipped = false;
  std::string error;
  double elapsed_ms = 0;
  std::size_t tool_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t flagged = 0;

  nlohmann::ordered_json to_json() const;
};

struct BatchSummary {
  std::string config_digest;
  std::vector<RecordOutcome> outcomes;  // input order
  std::size_t upstream_calls = 0;
  std::size_t cache_hits = 0;
  double elapsed_ms = 0;

  std::size_t errors() const;
};

using BackendFactory = std::function<std::unique_ptr<ChatBackend>()>;

// Filesystem-safe name for a record id.
std::string output_name_for(std::string_view record_id);

// Writes records/<name>.json and records/<name>.review.json under the output
// directory, manifest.jsonl, and for model modes logs/transcripts.jsonl. A
// failing record becomes an error entry and never stops the batch.
BatchSummary run_batch(const RunConfig& config, ServiceStack& services,
                       const BackendFactory& make_backend = {});
BatchSummary run_batch(const RunConfig& config);

BackendFactory backend_factory_for(const RunConfig& config, HttpTransport* transport);

}  // namespace metastd
