// Command line front end for the critique evaluation toolkit. Subcommands
// cover the staged scoring pipeline (gen-refs, extract-aius, judge, score),
// the prompting baselines (pairwise, single, refine), meta-evaluation
// statistics (meta-eval), leaderboard assembly, and dataset validation.
// Every stage writes only below its --out directory and is resumable: rerun
// with the same --out and already-persisted artifacts are reused.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacritique/errors.hpp"
#include "metacritique/gateway.hpp"
#include "metacritique/pipeline.hpp"
#include "metacritique/prompting.hpp"
#include "metacritique/scoring.hpp"
#include "metacritique/stats.hpp"
#include "metacritique/store.hpp"
#include "metacritique/types.hpp"
#include "metacritique/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metacritique;

namespace {

struct BackendOptions {
  std::string backend = "scripted";
  std::string fixtures;
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string cache_dir;  // empty -> <out>/cache
  bool no_cache = false;
  int timeout_seconds = 60;
  int max_retries = 3;
  int max_concurrency = 4;
};

struct PipelineOptions {
  std::string judge_model = "gpt-4";
  std::string generator_model = "gpt-4";
  bool no_reference_answer = false;
  int fanout = 4;
  double temperature = 0.0;
  int max_tokens = 1024;
  std::string prompts_dir;  // empty -> compiled-in templates
};

void add_backend_options(CLI::App* cmd, BackendOptions& o) {
  cmd->add_option("--backend", o.backend, "Model backend")
      ->check(CLI::IsMember({"scripted", "http"}))
      ->capture_default_str();
  cmd->add_option("--fixtures", o.fixtures,
                  "Fixture file for the scripted backend (required with --backend scripted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--base-url", o.base_url, "Chat completions endpoint")->capture_default_str();
  cmd->add_option("--api-key-env", o.api_key_env,
                  "Name of the environment variable holding the API key")
      ->capture_default_str();
  cmd->add_option("--cache-dir", o.cache_dir,
                  "Completion cache directory (default: <out>/cache)");
  cmd->add_flag("--no-cache", o.no_cache, "Disable the completion cache");
  cmd->add_option("--timeout", o.timeout_seconds, "Per-request timeout in seconds")
      ->capture_default_str();
  cmd->add_option("--max-retries", o.max_retries, "Retries for transient backend failures")
      ->capture_default_str();
  cmd->add_option("--max-concurrency", o.max_concurrency, "Concurrent in-flight completions")
      ->capture_default_str();
}

void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--judge-model", o.judge_model, "Model issuing verdicts")->capture_default_str();
  cmd->add_option("--generator-model", o.generator_model,
                  "Model generating reference answers and critiques")
      ->capture_default_str();
  cmd->add_flag("--no-reference-answer", o.no_reference_answer,
                "Judge precision without a reference answer slot");
  cmd->add_option("--fanout", o.fanout, "Parallel verdicts per record")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--temperature", o.temperature, "Sampling temperature")->capture_default_str();
  cmd->add_option("--max-tokens", o.max_tokens, "Completion token budget")->capture_default_str();
  cmd->add_option("--prompts-dir", o.prompts_dir,
                  "Load prompt templates from a directory instead of the compiled-in copies")
      ->check(CLI::ExistingDirectory);
}

TemplateLibrary load_templates(const PipelineOptions& o) {
  return o.prompts_dir.empty() ? TemplateLibrary::builtin() : TemplateLibrary::load(o.prompts_dir);
}

PipelineConfig to_pipeline_config(const PipelineOptions& o) {
  PipelineConfig config;
  config.judge_model = o.judge_model;
  config.generator_model = o.generator_model;
  config.use_reference_answer = !o.no_reference_answer;
  config.per_record_fanout = o.fanout;
  config.temperature = o.temperature;
  config.max_tokens = o.max_tokens;
  return config;
}

std::unique_ptr<Gateway> make_gateway(const BackendOptions& o, const fs::path& out_dir) {
  BackendConfig config;
  config.base_url = o.base_url;
  config.api_key_env = o.api_key_env;
  config.timeout_seconds = o.timeout_seconds;
  config.max_retries = o.max_retries;
  config.max_concurrency = o.max_concurrency;
  if (!o.no_cache) {
    config.cache_dir = o.cache_dir.empty() ? out_dir / "cache" : fs::path(o.cache_dir);
  }

  std::unique_ptr<Backend> backend;
  if (o.backend == "scripted") {
    if (o.fixtures.empty()) {
      throw ValidationError("--backend scripted requires --fixtures");
    }
    backend = std::make_unique<ScriptedBackend>(FixtureSet::load(o.fixtures));
  } else {
    backend = std::make_unique<HttpBackend>(config);
  }
  return std::make_unique<Gateway>(config, std::move(backend));
}

std::vector<EvalRecord> load_records_or_warn(const std::string& dataset) {
  DatasetLoadResult loaded = load_dataset(dataset);
  for (const LoadIssue& issue : loaded.issues) {
    std::cerr << "warning: " << dataset << ":" << issue.line << ": " << issue.message << "\n";
  }
  std::sort(loaded.records.begin(), loaded.records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.record_id() < b.record_id(); });
  return std::move(loaded.records);
}

RunManifest build_manifest(const std::string& dataset, const BackendOptions& b,
                           const PipelineOptions& p, const TemplateLibrary& templates) {
  RunManifest m;
  m.created_at = iso8601_now();
  m.judge_model = p.judge_model;
  m.generator_model = p.generator_model;
  m.use_reference_answer = !p.no_reference_answer;
  m.per_record_fanout = p.fanout;
  m.dataset_path = dataset;
  m.dataset_sha256 = sha256_hex(read_file(dataset));
  m.backend = b.backend;
  if (b.backend == "scripted") {
    m.fixtures_path = b.fixtures;
    m.fixtures_sha256 = sha256_hex(read_file(b.fixtures));
  }
  m.template_checksums = templates.checksums();

  std::ostringstream fingerprint;
  fingerprint << m.dataset_sha256 << '\n'
              << m.fixtures_sha256 << '\n'
              << m.judge_model << '|' << m.generator_model << '|' << m.use_reference_answer << '|'
              << m.per_record_fanout << '|' << p.temperature << '|' << p.max_tokens << '|'
              << m.backend;
  m.run_id = sha256_hex(fingerprint.str()).substr(0, 16);
  return m;
}

json report_as_json(const ScoreReport& report) {
  return json::parse(score_report_to_json_text(report));
}

json score_row_as_json(const ScoredCritique& row) {
  const ScoreReport& r = row.report;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["record_id"] = row.record_id;
  j["critique_id"] = row.critique_id;
  j["model"] = row.model;
  j["precision"] = r.precision ? json(*r.precision) : json(nullptr);
  j["recall"] = r.recall ? json(*r.recall) : json(nullptr);
  j["f1"] = r.f1;
  j["n_hypo_aius"] = r.n_hypo_aius;
  j["n_factual"] = r.n_factual;
  j["n_ref_aius"] = r.n_ref_aius;
  j["n_entailed"] = r.n_entailed;
  j["n_flagged"] = r.n_flagged;
  return j;
}

std::string ratio_cell(const std::optional<double>& ratio) {
  return ratio ? format_pct(*ratio) : std::string("n/a");
}

void print_aggregates(const std::vector<ScoredCritique>& rows) {
  std::vector<ScoreReport> reports;
  reports.reserve(rows.size());
  for (const ScoredCritique& row : rows) reports.push_back(row.report);
  ScoreReport micro = aggregate_micro(reports);
  ScoreReport macro = aggregate_macro(reports);

  auto line = [](const char* name, const ScoreReport& r) {
    std::cout << std::left << std::setw(6) << name << std::right << std::setw(10)
              << ratio_cell(r.precision) << std::setw(8) << ratio_cell(r.recall) << std::setw(8)
              << format_pct(r.f1) << "\n";
  };
  std::cout << std::left << std::setw(6) << "level" << std::right << std::setw(10) << "precision"
            << std::setw(8) << "recall" << std::setw(8) << "f1" << "\n";
  line("micro", micro);
  line("macro", macro);
}

// Writes scores.jsonl plus the micro/macro summary. `batch` is null on the
// offline --from-judgments path, which has no run diagnostics.
void write_score_files(const fs::path& out_dir, const std::vector<ScoredCritique>& rows,
                       const BatchResult* batch) {
  std::string lines;
  for (const ScoredCritique& row : rows) lines += score_row_as_json(row).dump() + "\n";
  write_file_atomic(out_dir / "scores.jsonl", lines);

  std::vector<ScoreReport> reports;
  reports.reserve(rows.size());
  for (const ScoredCritique& row : rows) reports.push_back(row.report);

  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["n_critiques"] = rows.size();
  summary["micro"] = report_as_json(aggregate_micro(reports));
  summary["macro"] = report_as_json(aggregate_macro(reports));
  if (batch) {
    summary["critiques_scored"] = batch->critiques_scored;
    summary["critiques_skipped"] = batch->critiques_skipped;
    summary["records_failed"] = batch->records_failed;
    json diag;
    diag["parse_retries"] = batch->diagnostics.parse_retries;
    diag["flagged_judgments"] = batch->diagnostics.flagged_judgments;
    diag["empty_extractions"] = batch->diagnostics.empty_extractions;
    json flagged = json::array();
    for (const FlaggedJudgment& f : batch->diagnostics.flagged) {
      flagged.push_back({{"record_id", f.record_id},
                         {"aiu_id", f.aiu_id},
                         {"task", to_string(f.task)},
                         {"reason", f.reason}});
    }
    diag["flagged"] = flagged;
    json errors = json::array();
    for (const RecordError& e : batch->diagnostics.record_errors) {
      errors.push_back({{"record_id", e.record_id}, {"message", e.message}});
    }
    diag["record_errors"] = errors;
    summary["diagnostics"] = diag;
  }
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
}

int run_validate(const std::string& dataset) {
  DatasetLoadResult loaded = load_dataset(dataset);
  for (const LoadIssue& issue : loaded.issues) {
    std::cout << dataset << ":" << issue.line << ": " << issue.message << "\n";
  }
  if (loaded.empty_file) {
    std::cout << dataset << ": warning: empty dataset\n";
  }
  std::cout << loaded.records.size() << " record(s), " << loaded.issues.size() << " issue(s)\n";
  return loaded.issues.empty() ? 0 : 1;
}

// gen-refs and extract-aius: settle reference artifacts (and optionally AIUs)
// for every record, persisting them for later stages.
int run_prepare(const std::string& dataset, const std::string& out, const BackendOptions& b,
                const PipelineOptions& p, bool with_aius) {
  fs::path out_dir(out);
  TemplateLibrary templates = load_templates(p);
  Store store(out_dir, templates.checksums());
  RunLock lock = store.lock();
  std::unique_ptr<Gateway> gateway = make_gateway(b, out_dir);
  Pipeline pipeline(*gateway, templates, to_pipeline_config(p));
  std::vector<EvalRecord> records = load_records_or_warn(dataset);

  std::int64_t failed = 0;
  std::int64_t total_aius = 0;
  for (EvalRecord& record : records) {
    try {
      pipeline.ensure_reference_artifacts(record, store);
      if (with_aius) {
        pipeline.ensure_aius(record, store);
        total_aius += static_cast<std::int64_t>(record.aius.size());
      }
    } catch (const Error& e) {
      ++failed;
      std::cerr << "record " << record.record_id() << ": " << e.what() << "\n";
    }
  }
  store.write_manifest(build_manifest(dataset, b, p, templates));

  std::cout << (with_aius ? "AIU extraction" : "reference generation") << " done for "
            << static_cast<std::int64_t>(records.size()) - failed << " of " << records.size()
            << " record(s)";
  if (with_aius) std::cout << ", " << total_aius << " AIU(s)";
  std::cout << "\n";
  PipelineDiagnostics diag = pipeline.diagnostics();
  if (diag.parse_retries > 0 || diag.empty_extractions > 0) {
    std::cout << "parse retries: " << diag.parse_retries
              << ", empty extractions: " << diag.empty_extractions << "\n";
  }
  for (const std::string& w : store.warnings()) std::cerr << "warning: " << w << "\n";
  return failed == 0 ? 0 : 1;
}

// judge and score: run the full batch. judge stops after persisting verdicts
// and per-critique reports; score additionally emits scores.jsonl and the
// summary. Records already holding persisted reports are skipped, so a score
// after a judge (or an interrupted run) reuses everything.
int run_batch_command(const std::string& dataset, const std::string& out, const BackendOptions& b,
                      const PipelineOptions& p, bool write_scores) {
  fs::path out_dir(out);
  TemplateLibrary templates = load_templates(p);
  Store store(out_dir, templates.checksums());
  RunLock lock = store.lock();
  std::unique_ptr<Gateway> gateway = make_gateway(b, out_dir);
  Pipeline pipeline(*gateway, templates, to_pipeline_config(p));
  std::vector<EvalRecord> records = load_records_or_warn(dataset);

  BatchResult result = pipeline.run_batch(records, store);
  store.write_manifest(build_manifest(dataset, b, p, templates));
  if (write_scores) {
    write_score_files(out_dir, result.rows, &result);
  }

  std::cout << "scored " << result.critiques_scored << " critique(s), skipped "
            << result.critiques_skipped << " with persisted reports, " << result.records_failed
            << " record(s) failed\n";
  for (const RecordError& err : result.diagnostics.record_errors) {
    std::cerr << "record " << err.record_id << ": " << err.message << "\n";
  }
  if (write_scores && !result.rows.empty()) print_aggregates(result.rows);
  for (const std::string& w : store.warnings()) std::cerr << "warning: " << w << "\n";
  return result.records_failed == 0 ? 0 : 1;
}

// score --from-judgments: derive reports from judgments already on the
// dataset (human gold labels or a prior judge run). No backend involved.
int run_score_offline(const std::string& dataset, const std::string& out,
                      const std::string& judge) {
  fs::path out_dir(out);
  fs::create_directories(out_dir);
  std::vector<EvalRecord> records = load_records_or_warn(dataset);
  std::vector<ScoredCritique> rows = score_from_judgments(records, judge);
  write_score_files(out_dir, rows, nullptr);

  std::cout << "scored " << rows.size() << " critique(s) from '" << judge << "' judgments\n";
  if (!rows.empty()) print_aggregates(rows);
  return 0;
}

// One method's scores, read leniently: any JSONL whose rows carry record_id,
// critique_id and a numeric field qualifies, including hand-built files.
struct ScoreFile {
  std::string method;
  std::map<std::string, double> by_item;  // "record_id::critique_id" -> value
};

ScoreFile read_score_file(const std::string& path, const std::string& field) {
  ScoreFile out;
  out.method = fs::path(path).stem().string();
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(where + ": not a JSON object");
    }
    std::string record_id = j.value("record_id", "");
    if (record_id.empty()) throw ValidationError(where + ": missing record_id");
    std::string key = record_id + "::" + j.value("critique_id", "");
    if (!j.contains(field) || !j[field].is_number()) {
      throw ValidationError(where + ": missing numeric field '" + field + "'");
    }
    if (!out.by_item.emplace(key, j[field].get<double>()).second) {
      throw ValidationError(where + ": duplicate item '" + key + "'");
    }
  }
  if (out.by_item.empty()) throw ValidationError(path + ": no usable rows");
  return out;
}

int run_meta_eval(const std::string& gold_path, const std::string& method_path,
                  const std::string& method_b_path, const std::string& metric_name,
                  const std::string& field, std::int64_t resamples, std::uint64_t seed,
                  const std::string& out) {
  CorrelationMetric metric = correlation_metric_from_string(metric_name);
  ScoreFile gold = read_score_file(gold_path, field);
  ScoreFile method_a = read_score_file(method_path, field);
  std::optional<ScoreFile> method_b;
  if (!method_b_path.empty()) method_b = read_score_file(method_b_path, field);

  // Restrict every series to the items all files share; map order keeps the
  // id list sorted and the pairing deterministic.
  std::vector<std::string> ids;
  for (const auto& [id, value] : gold.by_item) {
    if (!method_a.by_item.count(id)) continue;
    if (method_b && !method_b->by_item.count(id)) continue;
    ids.push_back(id);
  }
  if (ids.size() < 2) {
    throw ValidationError("fewer than 2 items shared by the score files");
  }
  auto series_of = [&ids](const ScoreFile& f, const std::string& name) {
    ScoreSeries s;
    s.method = name;
    s.ids = ids;
    for (const std::string& id : ids) s.values.push_back(f.by_item.at(id));
    return s;
  };
  ScoreSeries gold_series = series_of(gold, "gold");
  ScoreSeries a_series = series_of(method_a, method_a.method);

  SignificanceResult result;
  if (method_b) {
    result = paired_bootstrap(a_series, series_of(*method_b, method_b->method), gold_series,
                              metric, resamples, seed);
  } else {
    result = bootstrap_vs_zero(a_series, gold_series, metric, resamples, seed);
  }

  std::cout << "metric: " << to_string(metric) << " on '" << field << "', " << ids.size()
            << " item(s)\n";
  std::cout << to_string(metric) << "(" << result.method_a
            << ", gold) = " << format_fixed(result.observed_a, 4) << "\n";
  if (method_b) {
    std::cout << to_string(metric) << "(" << result.method_b
              << ", gold) = " << format_fixed(result.observed_b, 4) << "\n";
    std::cout << "delta = " << format_fixed(result.observed_delta, 4) << "\n";
  }
  std::cout << "p = " << format_fixed(result.p_value, 4) << " (" << result.resamples
            << " resamples, seed " << result.seed << ", " << result.n_redrawn << " redrawn)\n";

  if (!out.empty()) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["metric"] = to_string(metric);
    j["field"] = field;
    j["items"] = ids.size();
    j["method_a"] = result.method_a;
    j["method_b"] = result.method_b;
    j["observed_a"] = result.observed_a;
    j["observed_b"] = result.observed_b;
    j["delta"] = result.observed_delta;
    j["p_value"] = result.p_value;
    j["resamples"] = result.resamples;
    j["seed"] = result.seed;
    j["n_redrawn"] = result.n_redrawn;
    write_file_atomic(fs::path(out) / "meta_eval.json", j.dump(2) + "\n");
  }
  return 0;
}

struct PairSpec {
  std::string record_id;
  std::string a;
  std::string b;
  std::size_t line = 0;
};

std::vector<PairSpec> read_pairs(const std::string& path) {
  std::vector<PairSpec> pairs;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = path + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(where + ": not a JSON object");
    }
    PairSpec pair;
    pair.record_id = j.value("record_id", "");
    pair.a = j.value("a", "");
    pair.b = j.value("b", "");
    pair.line = lineno;
    if (pair.record_id.empty() || pair.a.empty() || pair.b.empty()) {
      throw ValidationError(where + ": needs record_id, a and b");
    }
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw ValidationError(path + ": no usable rows");
  return pairs;
}

struct ResolvedPair {
  const EvalRecord* record = nullptr;
  const Critique* a = nullptr;
  const Critique* b = nullptr;
};

ResolvedPair resolve_pair(const std::map<std::string, const EvalRecord*>& by_id,
                          const PairSpec& pair, const std::string& pairs_path) {
  std::string where = pairs_path + ":" + std::to_string(pair.line);
  auto it = by_id.find(pair.record_id);
  if (it == by_id.end()) {
    throw ValidationError(where + ": unknown record '" + pair.record_id + "'");
  }
  ResolvedPair resolved;
  resolved.record = it->second;
  resolved.a = resolved.record->find_critique(pair.a);
  resolved.b = resolved.record->find_critique(pair.b);
  if (!resolved.a) throw ValidationError(where + ": unknown critique '" + pair.a + "'");
  if (!resolved.b) throw ValidationError(where + ": unknown critique '" + pair.b + "'");
  return resolved;
}

std::map<std::string, const EvalRecord*> index_records(const std::vector<EvalRecord>& records) {
  std::map<std::string, const EvalRecord*> by_id;
  for (const EvalRecord& r : records) by_id.emplace(r.record_id(), &r);
  return by_id;
}

PairwiseProtocol protocol_from_string(const std::string& s) {
  return s == "single" ? PairwiseProtocol::single_run : PairwiseProtocol::double_run;
}

int run_pairwise(const std::string& dataset, const std::string& pairs_path, const std::string& out,
                 const std::string& protocol_name, const std::string& gold_path,
                 const BackendOptions& b, const PipelineOptions& p) {
  fs::path out_dir(out);
  fs::create_directories(out_dir);
  RunLock lock(out_dir / ".lock");
  TemplateLibrary templates = load_templates(p);
  std::unique_ptr<Gateway> gateway = make_gateway(b, out_dir);
  Pipeline pipeline(*gateway, templates, to_pipeline_config(p));
  std::vector<EvalRecord> records = load_records_or_warn(dataset);
  auto by_id = index_records(records);
  PairwiseProtocol protocol = protocol_from_string(protocol_name);

  std::vector<PairSpec> pairs = read_pairs(pairs_path);
  std::string lines;
  std::map<PairwiseChoice, std::int64_t> tally;
  std::vector<std::pair<std::string, PairwiseChoice>> keyed_choices;  // key: record::a::b
  for (const PairSpec& pair : pairs) {
    ResolvedPair r = resolve_pair(by_id, pair, pairs_path);
    PairwiseOutcome outcome = pipeline.baseline_pairwise(
        r.record->question, r.record->model_answer, *r.a, *r.b, protocol);
    ++tally[outcome.chosen];
    keyed_choices.emplace_back(pair.record_id + "::" + pair.a + "::" + pair.b, outcome.chosen);
    json j;
    j["schema_version"] = kSchemaVersion;
    j["record_id"] = outcome.record_id;
    j["a"] = pair.a;
    j["b"] = pair.b;
    j["method"] = outcome.method;
    j["chosen"] = to_string(outcome.chosen);
    lines += j.dump() + "\n";
  }
  write_file_atomic(out_dir / "pairwise.jsonl", lines);

  std::cout << pairs.size() << " pair(s): A " << tally[PairwiseChoice::A] << ", B "
            << tally[PairwiseChoice::B] << ", Tie " << tally[PairwiseChoice::Tie] << "\n";

  if (!gold_path.empty()) {
    // Gold rows mirror the pair keys and carry the human choice.
    std::map<std::string, PairwiseChoice> gold;
    std::istringstream in(read_file(gold_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::string where = gold_path + ":" + std::to_string(lineno);
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("chosen")) {
        throw ValidationError(where + ": needs record_id, a, b and chosen");
      }
      std::string key =
          j.value("record_id", "") + "::" + j.value("a", "") + "::" + j.value("b", "");
      gold[key] = pairwise_choice_from_string(j.at("chosen").get<std::string>());
    }
    std::vector<PairwiseChoice> ours;
    std::vector<PairwiseChoice> theirs;
    for (const auto& [key, choice] : keyed_choices) {
      auto it = gold.find(key);
      if (it == gold.end()) continue;
      ours.push_back(choice);
      theirs.push_back(it->second);
    }
    if (ours.empty()) {
      throw ValidationError(gold_path + ": no gold rows match the judged pairs");
    }
    std::cout << "agreement with gold: " << format_pct(agreement_rate(ours, theirs)) << "% over "
              << ours.size() << " pair(s)\n";
  }
  return 0;
}

int run_refine(const std::string& dataset, const std::string& pairs_path, const std::string& out,
               const std::string& protocol_name, const BackendOptions& b,
               const PipelineOptions& p) {
  fs::path out_dir(out);
  fs::create_directories(out_dir);
  RunLock lock(out_dir / ".lock");
  TemplateLibrary templates = load_templates(p);
  std::unique_ptr<Gateway> gateway = make_gateway(b, out_dir);
  Pipeline pipeline(*gateway, templates, to_pipeline_config(p));
  std::vector<EvalRecord> records = load_records_or_warn(dataset);
  auto by_id = index_records(records);
  PairwiseProtocol protocol = protocol_from_string(protocol_name);

  std::vector<PairSpec> pairs = read_pairs(pairs_path);
  std::string lines;
  std::vector<RefinementOutcome> outcomes;
  for (const PairSpec& pair : pairs) {
    ResolvedPair r = resolve_pair(by_id, pair, pairs_path);
    Answer refined_a = pipeline.refine_answer(r.record->question, r.record->model_answer, *r.a);
    Answer refined_b = pipeline.refine_answer(r.record->question, r.record->model_answer, *r.b);
    PairwiseChoice choice =
        pipeline.compare_refinements(r.record->question, refined_a, refined_b, protocol);
    RefinementOutcome outcome = choice == PairwiseChoice::A   ? RefinementOutcome::win
                                : choice == PairwiseChoice::B ? RefinementOutcome::loss
                                                              : RefinementOutcome::tie;
    outcomes.push_back(outcome);
    json j;
    j["schema_version"] = kSchemaVersion;
    j["record_id"] = pair.record_id;
    j["a"] = pair.a;
    j["b"] = pair.b;
    j["refined_a"] = refined_a.text;
    j["refined_b"] = refined_b.text;
    j["choice"] = to_string(choice);
    j["outcome"] = to_string(outcome);
    lines += j.dump() + "\n";
  }
  write_file_atomic(out_dir / "refine.jsonl", lines);

  WinRateTable table = win_rate_table(outcomes);
  std::cout << table.n << " pair(s): win " << format_fixed(table.win_pct, 2) << "% ("
            << table.wins << "), tie " << format_fixed(table.tie_pct, 2) << "% (" << table.ties
            << "), loss " << format_fixed(table.loss_pct, 2) << "% (" << table.losses << ")\n";
  return 0;
}

int run_single(const std::string& dataset, const std::string& out, const BackendOptions& b,
               const PipelineOptions& p) {
  fs::path out_dir(out);
  fs::create_directories(out_dir);
  RunLock lock(out_dir / ".lock");
  TemplateLibrary templates = load_templates(p);
  std::unique_ptr<Gateway> gateway = make_gateway(b, out_dir);
  Pipeline pipeline(*gateway, templates, to_pipeline_config(p));
  std::vector<EvalRecord> records = load_records_or_warn(dataset);

  std::string lines;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> per_model;  // sum, count
  std::int64_t failed = 0;
  for (const EvalRecord& record : records) {
    for (const Critique* critique : record.hypothesis_critiques()) {
      try {
        int rating = pipeline.baseline_single(record.question, record.model_answer, *critique);
        json j;
        j["schema_version"] = kSchemaVersion;
        j["record_id"] = record.record_id();
        j["critique_id"] = critique->id;
        j["model"] = critique->author_name;
        j["rating"] = rating;
        lines += j.dump() + "\n";
        auto& [sum, count] = per_model[critique->author_name];
        sum += rating;
        ++count;
      } catch (const Error& e) {
        ++failed;
        std::cerr << "critique " << critique->id << ": " << e.what() << "\n";
      }
    }
  }
  write_file_atomic(out_dir / "ratings.jsonl", lines);

  for (const auto& [model, acc] : per_model) {
    double mean = static_cast<double>(acc.first) / static_cast<double>(acc.second);
    std::cout << model << ": mean rating " << format_fixed(mean, 2) << " over " << acc.second
              << " critique(s)\n";
  }
  if (failed > 0) std::cout << failed << " critique(s) failed\n";
  return failed == 0 ? 0 : 1;
}

int run_leaderboard(const std::string& scores_path, const std::string& out) {
  std::map<std::string, std::vector<ScoreReport>> per_model;
  std::istringstream in(read_file(scores_path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string where = scores_path + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ValidationError(where + ": not a JSON object");
    }
    ScoreReport report;
    report.level = AggregationLevel::per_critique;
    if (j.contains("precision") && j["precision"].is_number()) {
      report.precision = j["precision"].get<double>();
    }
    if (j.contains("recall") && j["recall"].is_number()) {
      report.recall = j["recall"].get<double>();
    }
    if (!j.contains("f1") || !j["f1"].is_number()) {
      throw ValidationError(where + ": missing numeric field 'f1'");
    }
    report.f1 = j["f1"].get<double>();
    report.n_hypo_aius = j.value("n_hypo_aius", 0);
    report.n_factual = j.value("n_factual", 0);
    report.n_ref_aius = j.value("n_ref_aius", 0);
    report.n_entailed = j.value("n_entailed", 0);
    report.n_flagged = j.value("n_flagged", 0);
    per_model[j.value("model", std::string("unknown"))].push_back(report);
  }
  if (per_model.empty()) throw ValidationError(scores_path + ": no usable rows");

  std::vector<LeaderboardRow> rows = leaderboard(per_model);
  std::cout << render_leaderboard(rows);

  if (!out.empty()) {
    std::string lines_out;
    int rank = 0;
    for (const LeaderboardRow& row : rows) {
      json j;
      j["schema_version"] = kSchemaVersion;
      j["rank"] = ++rank;
      j["model"] = row.model;
      j["n_critiques"] = row.n_critiques;
      j["precision"] = row.scores.precision ? json(*row.scores.precision) : json(nullptr);
      j["recall"] = row.scores.recall ? json(*row.scores.recall) : json(nullptr);
      j["f1"] = row.scores.f1;
      lines_out += j.dump() + "\n";
    }
    write_file_atomic(fs::path(out) / "leaderboard.jsonl", lines_out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Critique evaluation: AIU-level precision/recall scoring, prompting baselines, "
               "and meta-evaluation statistics"};
  app.require_subcommand(1);
  int rc = 0;

  // validate
  std::string val_dataset;
  CLI::App* validate = app.add_subcommand("validate", "Check a dataset file, listing each issue");
  validate->add_option("--dataset", val_dataset, "JSONL dataset")->required();
  validate->callback([&] { rc = run_validate(val_dataset); });

  // gen-refs
  std::string genrefs_dataset, genrefs_out;
  BackendOptions genrefs_backend;
  PipelineOptions genrefs_pipeline;
  CLI::App* genrefs = app.add_subcommand(
      "gen-refs", "Generate and persist reference answers and reference critiques");
  genrefs->add_option("--dataset", genrefs_dataset, "JSONL dataset")->required();
  genrefs->add_option("--out", genrefs_out, "Output directory")->required();
  add_backend_options(genrefs, genrefs_backend);
  add_pipeline_options(genrefs, genrefs_pipeline);
  genrefs->callback([&] {
    rc = run_prepare(genrefs_dataset, genrefs_out, genrefs_backend, genrefs_pipeline, false);
  });

  // extract-aius
  std::string extract_dataset, extract_out;
  BackendOptions extract_backend;
  PipelineOptions extract_pipeline;
  CLI::App* extract =
      app.add_subcommand("extract-aius", "Split every critique into atomic information units");
  extract->add_option("--dataset", extract_dataset, "JSONL dataset")->required();
  extract->add_option("--out", extract_out, "Output directory")->required();
  add_backend_options(extract, extract_backend);
  add_pipeline_options(extract, extract_pipeline);
  extract->callback([&] {
    rc = run_prepare(extract_dataset, extract_out, extract_backend, extract_pipeline, true);
  });

  // judge
  std::string judge_dataset, judge_out;
  BackendOptions judge_backend;
  PipelineOptions judge_pipeline;
  CLI::App* judge =
      app.add_subcommand("judge", "Collect factuality and entailment verdicts for every AIU");
  judge->add_option("--dataset", judge_dataset, "JSONL dataset")->required();
  judge->add_option("--out", judge_out, "Output directory")->required();
  add_backend_options(judge, judge_backend);
  add_pipeline_options(judge, judge_pipeline);
  judge->callback([&] {
    rc = run_batch_command(judge_dataset, judge_out, judge_backend, judge_pipeline, false);
  });

  // score
  std::string score_dataset, score_out, score_judge;
  BackendOptions score_backend;
  PipelineOptions score_pipeline;
  CLI::App* score = app.add_subcommand(
      "score", "Run the full pipeline and write per-critique scores plus micro/macro summaries");
  score->add_option("--dataset", score_dataset, "JSONL dataset")->required();
  score->add_option("--out", score_out, "Output directory")->required();
  score->add_option("--from-judgments", score_judge,
                    "Skip the backend; score judgments already on the dataset by this judge name");
  add_backend_options(score, score_backend);
  add_pipeline_options(score, score_pipeline);
  score->callback([&] {
    rc = score_judge.empty()
             ? run_batch_command(score_dataset, score_out, score_backend, score_pipeline, true)
             : run_score_offline(score_dataset, score_out, score_judge);
  });

  // meta-eval
  std::string me_gold, me_method, me_method_b, me_out;
  std::string me_metric = "kendall";
  std::string me_field = "f1";
  std::int64_t me_resamples = 10000;
  std::uint64_t me_seed = 13;
  CLI::App* meta = app.add_subcommand(
      "meta-eval", "Correlate method scores against gold and bootstrap the significance");
  meta->add_option("--gold", me_gold, "Gold scores JSONL")->required();
  meta->add_option("--method", me_method, "Method scores JSONL")->required();
  meta->add_option("--method-b", me_method_b,
                   "Second method; runs the paired test instead of the one-sample test");
  meta->add_option("--metric", me_metric, "pearson, spearman or kendall")
      ->check(CLI::IsMember({"pearson", "spearman", "kendall"}))
      ->capture_default_str();
  meta->add_option("--field", me_field, "Score field to read from each row")
      ->capture_default_str();
  meta->add_option("--resamples", me_resamples, "Bootstrap resamples")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  meta->add_option("--seed", me_seed, "Bootstrap seed")->capture_default_str();
  meta->add_option("--out", me_out, "Also write meta_eval.json into this directory");
  meta->callback([&] {
    rc = run_meta_eval(me_gold, me_method, me_method_b, me_metric, me_field, me_resamples,
                       me_seed, me_out);
  });

  // pairwise
  std::string pw_dataset, pw_pairs, pw_out, pw_gold;
  std::string pw_protocol = "double";
  BackendOptions pw_backend;
  PipelineOptions pw_pipeline;
  CLI::App* pairwise =
      app.add_subcommand("pairwise", "Judge critique pairs with the pairwise baseline");
  pairwise->add_option("--dataset", pw_dataset, "JSONL dataset")->required();
  pairwise->add_option("--pairs", pw_pairs, "JSONL pair list: record_id, a, b")->required();
  pairwise->add_option("--out", pw_out, "Output directory")->required();
  pairwise->add_option("--protocol", pw_protocol, "double (order-debiased) or single")
      ->check(CLI::IsMember({"double", "single"}))
      ->capture_default_str();
  pairwise->add_option("--gold", pw_gold, "Gold choices JSONL; reports the agreement rate");
  add_backend_options(pairwise, pw_backend);
  add_pipeline_options(pairwise, pw_pipeline);
  pairwise->callback([&] {
    rc = run_pairwise(pw_dataset, pw_pairs, pw_out, pw_protocol, pw_gold, pw_backend, pw_pipeline);
  });

  // refine
  std::string rf_dataset, rf_pairs, rf_out;
  std::string rf_protocol = "double";
  BackendOptions rf_backend;
  PipelineOptions rf_pipeline;
  CLI::App* refine = app.add_subcommand(
      "refine", "Refine the answer under each critique of a pair and compare the refinements");
  refine->add_option("--dataset", rf_dataset, "JSONL dataset")->required();
  refine->add_option("--pairs", rf_pairs, "JSONL pair list: record_id, a, b")->required();
  refine->add_option("--out", rf_out, "Output directory")->required();
  refine->add_option("--protocol", rf_protocol, "double (order-debiased) or single")
      ->check(CLI::IsMember({"double", "single"}))
      ->capture_default_str();
  add_backend_options(refine, rf_backend);
  add_pipeline_options(refine, rf_pipeline);
  refine->callback([&] {
    rc = run_refine(rf_dataset, rf_pairs, rf_out, rf_protocol, rf_backend, rf_pipeline);
  });

  // single
  std::string sg_dataset, sg_out;
  BackendOptions sg_backend;
  PipelineOptions sg_pipeline;
  CLI::App* single =
      app.add_subcommand("single", "Rate each critique on the 1-7 scale single baseline");
  single->add_option("--dataset", sg_dataset, "JSONL dataset")->required();
  single->add_option("--out", sg_out, "Output directory")->required();
  add_backend_options(single, sg_backend);
  add_pipeline_options(single, sg_pipeline);
  single->callback([&] { rc = run_single(sg_dataset, sg_out, sg_backend, sg_pipeline); });

  // leaderboard
  std::string lb_scores, lb_out;
  CLI::App* board =
      app.add_subcommand("leaderboard", "Rank models by macro F1 from a scores file");
  board->add_option("--scores", lb_scores, "scores.jsonl produced by the score subcommand")
      ->required();
  board->add_option("--out", lb_out, "Also write leaderboard.jsonl into this directory");
  board->callback([&] { rc = run_leaderboard(lb_scores, lb_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
