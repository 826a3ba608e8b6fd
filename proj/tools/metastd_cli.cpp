// metastd: standardize legacy metadata records against templates, serve the
// terminology tools over stdio, and score outputs against gold records.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "metastd/agent.hpp"
#include "metastd/errors.hpp"
#include "metastd/evaluation.hpp"
#include "metastd/orchestrator.hpp"
#include "metastd/record.hpp"
#include "metastd/tool_server.hpp"

namespace fs = std::filesystem;
using namespace metastd;

namespace {

constexpr int kExitFatal = 1;
constexpr int kExitConfig = 2;

void add_service_options(CLI::App& cmd, ServiceConfig& services, std::string& mock,
                         std::string& cache_file, bool& no_cache) {
  cmd.add_option("--mock-fixtures", mock,
                 "Fixture file or directory; serves templates and terms offline");
  cmd.add_option("--cache-file", cache_file, "Persistent response cache (append-only lines)");
  cmd.add_flag("--no-cache", no_cache, "Disable response caching");
  cmd.add_option("--cedar-endpoint", services.cedar.endpoint, "CEDAR REST base URL")
      ->capture_default_str();
  cmd.add_option("--bioportal-endpoint", services.bioportal.endpoint, "BioPortal REST base URL")
      ->capture_default_str();
  cmd.add_option("--max-inflight-upstream", services.max_inflight_upstream,
                 "Concurrent live requests allowed (ignored with mocks)")
      ->capture_default_str();
}

void finish_services(ServiceConfig& services, const std::string& mock,
                     const std::string& cache_file, bool no_cache) {
  if (!mock.empty()) services.mock_fixtures = mock;
  if (!cache_file.empty()) services.cache_file = cache_file;
  services.cache_enabled = !no_cache;
}

// The id and grouping columns are bookkeeping, not scored, unless the
// template declares them.
void drop_bookkeeping(MetadataRecord& r, const TemplateSpec& spec, const std::string& id_key,
                      const std::string& group_by) {
  for (const auto* key : {&id_key, &group_by}) {
    if (!key->empty() && !spec.find(*key)) r.erase(*key);
  }
}

std::string load_group(const MetadataRecord& gold, const std::string& group_by) {
  if (group_by.empty()) return "all";
  const std::string* v = gold.find(group_by);
  return v && !v->empty() ? *v : "(none)";
}

int run_evaluate(const std::vector<std::string>& gold_path,
                 const std::vector<std::string>& predicted_paths,
                 std::vector<std::string> labels, const std::vector<std::string>& template_paths,
                 const std::string& group_by, const std::string& id_key, const std::string& out,
                 const std::string& format) {
  if (!labels.empty() && labels.size() != predicted_paths.size()) {
    throw ConfigError("--label must be given once per --predicted");
  }
  if (labels.empty()) {
    if (predicted_paths.size() == 1) {
      labels.push_back("Predicted");
    } else {
      for (std::size_t i = 0; i < predicted_paths.size(); ++i) {
        labels.push_back("Run" + std::to_string(i + 1));
      }
    }
  }

  std::vector<FieldSpec> merged;
  for (const auto& p : template_paths) {
    TemplateSpec one = parse_template(read_file(p));
    for (const auto& f : one.fields()) {
      bool seen = std::any_of(merged.begin(), merged.end(),
                              [&](const FieldSpec& m) { return m.name == f.name; });
      if (!seen) merged.push_back(f);
    }
  }
  TemplateSpec spec("merged", std::move(merged));

  RecordParseOptions opts;
  opts.id_key = id_key;
  std::vector<MetadataRecord> gold;
  for (const auto& g : gold_path) {
    for (auto& r : load_records(g, opts)) gold.push_back(std::move(r));
  }

  std::vector<LabeledReport> runs;
  for (std::size_t i = 0; i < predicted_paths.size(); ++i) {
    std::map<std::string, MetadataRecord> predicted;
    for (auto& r : load_records(predicted_paths[i], opts)) {
      std::string id = r.id();
      predicted.emplace(std::move(id), std::move(r));
    }
    std::vector<GroupedScore> scores;
    std::vector<std::string> diagnostics;
    for (const auto& g : gold) {
      auto it = predicted.find(g.id());
      MetadataRecord empty(g.id());
      const MetadataRecord& p = it == predicted.end() ? empty : it->second;
      if (it == predicted.end()) {
        spdlog::warn("{}: no prediction for record {}", labels[i], g.id());
      }
      std::string group = load_group(g, group_by);
      MetadataRecord gs = g;
      MetadataRecord ps = p;
      if (it != predicted.end()) predicted.erase(it);
      drop_bookkeeping(gs, spec, id_key, group_by);
      drop_bookkeeping(ps, spec, id_key, group_by);
      for (auto& s : score_record(gs, ps, spec, &diagnostics)) {
        scores.push_back({group, g.id(), std::move(s)});
      }
    }
    for (const auto& [id, r] : predicted) {
      spdlog::warn("{}: prediction {} has no gold record; ignored", labels[i], id);
    }
    for (const auto& d : diagnostics) spdlog::debug("{}", d);
    runs.push_back({labels[i], aggregate(scores)});
  }

  ReportFormat fmt = ReportFormat::kTableText;
  if (format == "json" || (format.empty() && fs::path(out).extension() == ".json")) {
    fmt = ReportFormat::kStructured;
  }
  RenderOptions render;
  if (!group_by.empty()) render.group_header = group_by;
  std::string text = render_report(runs, fmt, render);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("metastd");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);

  CLI::App app{"Standardize legacy metadata records against machine-actionable templates."};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  // standardize
  RunConfig run;
  run.parallelism = std::max(1u, std::thread::hardware_concurrency());
  std::string mode = "deterministic";
  std::string template_file;
  std::string mock, cache_file;
  bool no_cache = false;
  bool no_temperature = false;
  long per_call_ms = run.limits.per_call_timeout.count();
  long budget_ms = run.limits.total_budget.count();
  long request_ms = run.backend.request_timeout.count();
  std::size_t sample = 0;
  std::string input, out_dir;
  auto* standardize = app.add_subcommand("standardize", "Standardize a batch of legacy records");
  standardize->add_option("--mode", mode, "agent | baseline | deterministic")
      ->check(CLI::IsMember({"agent", "baseline", "deterministic"}))
      ->capture_default_str();
  standardize->add_option("--template", template_file, "Template file (internal or CEDAR JSON)");
  standardize->add_option("--template-id", run.template_id, "Template identifier to fetch");
  standardize->add_option("--input", input, "TSV/JSON record file or directory")->required();
  standardize->add_option("--out", out_dir, "Output directory")->required();
  standardize->add_option("--id-key", run.id_key, "Field holding the record id");
  standardize->add_option("--parallelism,-j", run.parallelism, "Concurrent records")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  standardize->add_option("--seed", run.seed, "Seed for --sample")->capture_default_str();
  standardize->add_option("--sample", sample, "Process a random subset of N records");
  standardize->add_flag("--skip-existing", run.skip_existing, "Keep existing record outputs");
  add_service_options(*standardize, run.services, mock, cache_file, no_cache);
  standardize->add_option("--backend", run.backend_kind, "http | echo | script:PATH")
      ->capture_default_str();
  standardize->add_option("--endpoint", run.backend.endpoint, "Chat-completions base URL")
      ->capture_default_str();
  standardize->add_option("--model", run.backend.model, "Model name");
  standardize->add_option("--api-key-env", run.backend.api_key_env,
                          "Environment variable holding the model API key")
      ->capture_default_str();
  double temperature = 0.0;
  standardize->add_option("--temperature", temperature, "Sampling temperature")
      ->capture_default_str();
  standardize->add_flag("--no-temperature", no_temperature,
                        "Omit temperature for models that reject it");
  standardize->add_option("--request-timeout-ms", request_ms, "Model request timeout")
      ->capture_default_str();
  standardize->add_option("--max-tool-iterations", run.limits.max_tool_iterations,
                          "Tool rounds per record")
      ->capture_default_str();
  standardize->add_option("--per-call-timeout-ms", per_call_ms, "Tool call timeout")
      ->capture_default_str();
  standardize->add_option("--total-budget-ms", budget_ms, "Time budget per record")
      ->capture_default_str();

  // evaluate
  std::vector<std::string> gold, predicted, labels, templates;
  std::string group_by, eval_id_key, eval_out, eval_format;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold records");
  evaluate->add_option("--gold", gold, "Gold record file or directory")->required();
  evaluate->add_option("--predicted", predicted, "Predicted records (repeat per run)")->required();
  evaluate->add_option("--label", labels, "Run label (repeat per --predicted)");
  evaluate->add_option("--template", templates, "Template file(s) for field categories")
      ->required();
  evaluate->add_option("--group-by", group_by, "Gold field to stratify by, e.g. assay_type");
  evaluate->add_option("--id-key", eval_id_key, "Field holding the record id");
  evaluate->add_option("--out", eval_out, "Report file (.json for structured output)");
  evaluate->add_option("--format", eval_format, "table | json")
      ->check(CLI::IsMember({"table", "json"}));

  // serve-tools
  ServiceConfig serve_services;
  std::string serve_mock, serve_cache;
  bool serve_no_cache = false;
  std::string transport = "stdio";
  std::size_t max_calls = 8;
  auto* serve = app.add_subcommand("serve-tools", "Serve the three tools over JSON-RPC stdio");
  serve->add_option("--transport", transport, "Only stdio is supported")
      ->check(CLI::IsMember({"stdio"}))
      ->capture_default_str();
  serve->add_option("--max-concurrent-calls", max_calls, "Tool calls run at once")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  add_service_options(*serve, serve_services, serve_mock, serve_cache, serve_no_cache);

  // fetch-template
  ServiceConfig fetch_services;
  std::string fetch_mock, fetch_cache;
  bool fetch_no_cache = false;
  std::string fetch_id;
  bool fetch_parse = false;
  auto* fetch = app.add_subcommand("fetch-template", "Fetch a template document");
  fetch->add_option("--template-id", fetch_id, "Template identifier")->required();
  fetch->add_flag("--parse", fetch_parse, "Print the parsed internal template instead");
  add_service_options(*fetch, fetch_services, fetch_mock, fetch_cache, fetch_no_cache);

  // search-term
  ServiceConfig search_services;
  std::string search_mock, search_cache;
  bool search_no_cache = false;
  std::string ontology, query, branch;
  auto* search = app.add_subcommand("search-term", "Search an ontology or ontology branch");
  search->add_option("--ontology", ontology, "Ontology acronym")->required();
  search->add_option("--query", query, "Search text")->required();
  search->add_option("--branch", branch, "Branch root concept identifier");
  add_service_options(*search, search_services, search_mock, search_cache, search_no_cache);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; usage errors share the config exit code.
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*standardize) {
      run.mode = *run_mode_from_string(mode);
      if (!template_file.empty()) run.template_file = template_file;
      run.input = input;
      run.output_dir = out_dir;
      if (sample > 0) run.sample = sample;
      finish_services(run.services, mock, cache_file, no_cache);
      if (no_temperature) {
        run.backend.temperature.reset();
      } else {
        run.backend.temperature = temperature;
      }
      run.backend.request_timeout = std::chrono::milliseconds(request_ms);
      run.limits.per_call_timeout = std::chrono::milliseconds(per_call_ms);
      run.limits.total_budget = std::chrono::milliseconds(budget_ms);
      BatchSummary summary = run_batch(run);
      std::size_t skipped = 0;
      for (const auto& o : summary.outcomes) skipped += o.skipped ? 1 : 0;
      std::cout << "records: " << summary.outcomes.size() << "  errors: " << summary.errors()
                << "  skipped: " << skipped << "  upstream calls: " << summary.upstream_calls
                << "  cache hits: " << summary.cache_hits << "\n";
      return 0;
    }
    if (*evaluate) {
      return run_evaluate(gold, predicted, labels, templates, group_by, eval_id_key, eval_out,
                          eval_format);
    }
    if (*serve) {
      finish_services(serve_services, serve_mock, serve_cache, serve_no_cache);
      ServiceStack services(serve_services);
      JsonRpcServer::Options options;
      options.max_concurrent_calls = max_calls;
      JsonRpcServer server(services.tools(), options);
      std::ios::sync_with_stdio(false);
      server.serve(std::cin, std::cout);
      return 0;
    }
    if (*fetch) {
      finish_services(fetch_services, fetch_mock, fetch_cache, fetch_no_cache);
      ServiceStack services(fetch_services);
      std::string raw = services.templates().fetch_template(fetch_id).payload;
      if (fetch_parse) {
        auto parsed = parse_template_document(raw);
        for (const auto& w : parsed.warnings) spdlog::warn("{}", w);
        std::cout << template_to_json(parsed.spec).dump(2) << "\n";
      } else {
        std::cout << raw;
        if (!raw.empty() && raw.back() != '\n') std::cout << "\n";
      }
      return 0;
    }
    if (*search) {
      finish_services(search_services, search_mock, search_cache, search_no_cache);
      ServiceStack services(search_services);
      SearchResult result = branch.empty()
                                ? services.terminology().search_ontology(ontology, query)
                                : services.terminology().search_branch(ontology, branch, query);
      for (const auto& c : result.candidates) {
        std::cout << c.preferred_label << "\t" << c.concept_iri << "\t" << c.ontology_acronym
                  << "\n";
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    std::cerr << app.help() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFatal;
  }
  return 0;
}
