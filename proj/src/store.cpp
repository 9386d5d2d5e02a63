#include "metacritique/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metacritique/errors.hpp"
#include "metacritique/util.hpp"

namespace metacritique {

namespace {

using nlohmann::json;

json answer_to_json(const Answer& a) {
  return json{{"text", a.text}, {"kind", to_string(a.kind)}};
}

Answer answer_from_json(const json& j) {
  Answer a;
  a.text = j.at("text").get<std::string>();
  a.kind = answer_kind_from_string(j.at("kind").get<std::string>());
  return a;
}

json critique_to_json(const Critique& c) {
  return json{{"id", c.id},
              {"text", c.text},
              {"role", to_string(c.role)},
              {"author", to_string(c.author)},
              {"author_name", c.author_name}};
}

Critique critique_from_json(const json& j) {
  Critique c;
  c.id = j.at("id").get<std::string>();
  c.text = j.at("text").get<std::string>();
  c.role = critique_role_from_string(j.at("role").get<std::string>());
  c.author = critique_author_from_string(j.at("author").get<std::string>());
  c.author_name = j.value("author_name", "");
  return c;
}

json aiu_to_json(const Aiu& a) {
  return json{{"id", a.id}, {"critique_id", a.critique_id}, {"index", a.index}, {"text", a.text}};
}

Aiu aiu_from_json(const json& j) {
  Aiu a;
  a.id = j.at("id").get<std::string>();
  a.critique_id = j.at("critique_id").get<std::string>();
  a.index = j.at("index").get<int>();
  a.text = j.at("text").get<std::string>();
  return a;
}

json judgment_to_json(const Judgment& j) {
  json out{{"aiu_id", j.aiu_id},
           {"task", to_string(j.task)},
           {"label", j.label},
           {"rationale", j.rationale},
           {"judge", j.judge}};
  if (!j.premise_critique_id.empty()) out["premise_critique_id"] = j.premise_critique_id;
  return out;
}

Judgment judgment_from_json(const json& j) {
  Judgment out;
  out.aiu_id = j.at("aiu_id").get<std::string>();
  out.task = judgment_task_from_string(j.at("task").get<std::string>());
  out.label = j.at("label").get<bool>();
  out.rationale = j.value("rationale", "");
  out.judge = j.at("judge").get<std::string>();
  out.premise_critique_id = j.value("premise_critique_id", "");
  return out;
}

json report_to_json(const ScoreReport& r) {
  json display = json::object();
  display["precision"] = r.precision ? json(format_pct(*r.precision)) : json(nullptr);
  display["recall"] = r.recall ? json(format_pct(*r.recall)) : json(nullptr);
  display["f1"] = format_pct(r.f1);
  return json{{"level", to_string(r.level)},
              {"precision", r.precision ? json(*r.precision) : json(nullptr)},
              {"recall", r.recall ? json(*r.recall) : json(nullptr)},
              {"f1", r.f1},
              {"n_hypo_aius", r.n_hypo_aius},
              {"n_factual", r.n_factual},
              {"n_ref_aius", r.n_ref_aius},
              {"n_entailed", r.n_entailed},
              {"n_flagged", r.n_flagged},
              {"display", display}};
}

ScoreReport report_from_json(const json& j) {
  ScoreReport r;
  r.level = aggregation_level_from_string(j.at("level").get<std::string>());
  if (!j.at("precision").is_null()) r.precision = j["precision"].get<double>();
  if (!j.at("recall").is_null()) r.recall = j["recall"].get<double>();
  r.f1 = j.at("f1").get<double>();
  r.n_hypo_aius = j.at("n_hypo_aius").get<std::int64_t>();
  r.n_factual = j.at("n_factual").get<std::int64_t>();
  r.n_ref_aius = j.at("n_ref_aius").get<std::int64_t>();
  r.n_entailed = j.at("n_entailed").get<std::int64_t>();
  r.n_flagged = j.value("n_flagged", std::int64_t{0});

  // For count-backed levels the ratios must reproduce from the counts.
  if (r.level != AggregationLevel::macro) {
    auto check = [](const std::optional<double>& ratio, std::int64_t num, std::int64_t den,
                    const char* what) {
      if (den > 0) {
        if (!ratio) throw ValidationError(std::string(what) + " missing despite nonzero count");
        double expect = static_cast<double>(num) / static_cast<double>(den);
        if (std::abs(*ratio - expect) > 1e-12) {
          throw ValidationError(std::string(what) + " does not reproduce from its counts");
        }
      } else if (ratio) {
        throw ValidationError(std::string(what) + " present despite zero count");
      }
    };
    check(r.precision, r.n_factual, r.n_hypo_aius, "precision");
    check(r.recall, r.n_entailed, r.n_ref_aius, "recall");
  }
  return r;
}

json record_to_json(const EvalRecord& r) {
  json critiques = json::array();
  for (const auto& c : r.critiques) critiques.push_back(critique_to_json(c));
  json aius = json::array();
  for (const auto& a : r.aius) aius.push_back(aiu_to_json(a));
  json judgments = json::array();
  for (const auto& j : r.judgments) judgments.push_back(judgment_to_json(j));
  return json{{"schema_version", kSchemaVersion},
              {"question",
               {{"id", r.question.id},
                {"text", r.question.text},
                {"task_domain", to_string(r.question.task_domain)},
                {"source_dataset", r.question.source_dataset}}},
              {"model_answer", answer_to_json(r.model_answer)},
              {"reference_answer",
               r.reference_answer ? answer_to_json(*r.reference_answer) : json(nullptr)},
              {"critiques", critiques},
              {"aius", aius},
              {"judgments", judgments}};
}

EvalRecord record_from_json(const json& j) {
  if (!j.contains("schema_version")) {
    throw ValidationError("record missing schema_version");
  }
  int version = j["schema_version"].get<int>();
  if (version != kSchemaVersion) {
    throw ValidationError("unsupported schema_version " + std::to_string(version));
  }
  EvalRecord r;
  const auto& q = j.at("question");
  r.question.id = q.at("id").get<std::string>();
  r.question.text = q.at("text").get<std::string>();
  r.question.task_domain = task_domain_from_string(q.at("task_domain").get<std::string>());
  r.question.source_dataset = q.value("source_dataset", "");
  r.model_answer = answer_from_json(j.at("model_answer"));
  if (j.contains("reference_answer") && !j["reference_answer"].is_null()) {
    r.reference_answer = answer_from_json(j["reference_answer"]);
  }
  for (const auto& c : j.value("critiques", json::array())) {
    r.critiques.push_back(critique_from_json(c));
  }
  for (const auto& a : j.value("aius", json::array())) {
    r.aius.push_back(aiu_from_json(a));
  }
  for (const auto& jd : j.value("judgments", json::array())) {
    r.judgments.push_back(judgment_from_json(jd));
  }
  r.validate();
  return r;
}

json checksums_to_json(const std::map<std::string, std::string>& sums) {
  json out = json::object();
  for (const auto& [k, v] : sums) out[k] = v;
  return out;
}

std::map<std::string, std::string> checksums_from_json(const json& j) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
  return out;
}

}  // namespace

std::string to_jsonl_line(const EvalRecord& record) { return record_to_json(record).dump(); }

EvalRecord record_from_json_text(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ValidationError("line is not valid JSON");
  try {
    return record_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("record field error: ") + e.what());
  }
}

std::string score_report_to_json_text(const ScoreReport& report) {
  return report_to_json(report).dump();
}

ScoreReport score_report_from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("report is not valid JSON");
  try {
    return report_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report field error: ") + e.what());
  }
}

DatasetLoadResult load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open dataset " + path.string());

  DatasetLoadResult result;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    any_content = true;
    try {
      EvalRecord record = record_from_json_text(line);
      if (!ids.insert(record.record_id()).second) {
        result.issues.push_back({line_no, "duplicate record id '" + record.record_id() + "'"});
        continue;
      }
      result.records.push_back(std::move(record));
    } catch (const Error& e) {
      result.issues.push_back({line_no, e.what()});
    }
  }
  result.empty_file = !any_content;
  return result;
}

void save_dataset(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += to_jsonl_line(r);
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// RunLock

RunLock::RunLock(std::filesystem::path path) : path_(std::move(path)) {
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw LockError("output directory is locked by another run (" + path_.string() +
                    " exists); remove the stale lock if no run is active");
  }
  std::string pid = std::to_string(::getpid()) + "\n";
  ssize_t n = ::write(fd, pid.data(), pid.size());
  (void)n;
  ::close(fd);
  held_ = true;
}

RunLock::~RunLock() {
  if (held_) {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

RunLock::RunLock(RunLock&& other) noexcept : path_(std::move(other.path_)), held_(other.held_) {
  other.held_ = false;
}

RunLock& RunLock::operator=(RunLock&& other) noexcept {
  if (this != &other) {
    if (held_) {
      std::error_code ec;
      std::filesystem::remove(path_, ec);
    }
    path_ = std::move(other.path_);
    held_ = other.held_;
    other.held_ = false;
  }
  return *this;
}

// ---------------------------------------------------------------------------
// Store

Store::Store(std::filesystem::path root, std::map<std::string, std::string> template_checksums)
    : root_(std::move(root)), template_checksums_(std::move(template_checksums)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw StoreError("cannot create store root " + root_.string() + ": " + ec.message());
}

RunLock Store::lock() { return RunLock(root_ / ".lock"); }

namespace {

std::filesystem::path pair_file(const std::filesystem::path& dir, const std::string& record_id,
                                const std::string& critique_id) {
  return dir / (sanitize_for_filename(record_id) + "__" + sanitize_for_filename(critique_id) +
                ".json");
}

}  // namespace

void Store::put_reference_answer(const std::string& record_id, const Answer& answer) {
  json j{{"schema_version", kSchemaVersion},
         {"record_id", record_id},
         {"answer", answer_to_json(answer)}};
  write_file_atomic(root_ / "answers" / (sanitize_for_filename(record_id) + ".json"),
                    j.dump(2) + "\n");
}

std::optional<Answer> Store::get_reference_answer(const std::string& record_id) const {
  auto path = root_ / "answers" / (sanitize_for_filename(record_id) + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  return answer_from_json(j.at("answer"));
}

void Store::put_reference_critique(const std::string& record_id, const Critique& critique) {
  json j{{"schema_version", kSchemaVersion},
         {"record_id", record_id},
         {"critique", critique_to_json(critique)}};
  write_file_atomic(root_ / "critiques" / (sanitize_for_filename(record_id) + ".json"),
                    j.dump(2) + "\n");
}

std::optional<Critique> Store::get_reference_critique(const std::string& record_id) const {
  auto path = root_ / "critiques" / (sanitize_for_filename(record_id) + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  return critique_from_json(j.at("critique"));
}

void Store::put_aius(const std::string& record_id, const std::string& critique_id,
                     std::span<const Aiu> aius) {
  json arr = json::array();
  for (const auto& a : aius) arr.push_back(aiu_to_json(a));
  json j{{"schema_version", kSchemaVersion},
         {"record_id", record_id},
         {"critique_id", critique_id},
         {"aius", arr}};
  write_file_atomic(pair_file(root_ / "aius", record_id, critique_id), j.dump(2) + "\n");
}

std::optional<std::vector<Aiu>> Store::get_aius(const std::string& record_id,
                                                const std::string& critique_id) const {
  auto path = pair_file(root_ / "aius", record_id, critique_id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  std::vector<Aiu> out;
  for (const auto& a : j.at("aius")) out.push_back(aiu_from_json(a));
  return out;
}

void Store::put_judgments(const std::string& record_id, const std::string& critique_id,
                          std::span<const Judgment> judgments) {
  json arr = json::array();
  for (const auto& jd : judgments) arr.push_back(judgment_to_json(jd));
  json j{{"schema_version", kSchemaVersion},
         {"record_id", record_id},
         {"critique_id", critique_id},
         {"template_checksums", checksums_to_json(template_checksums_)},
         {"judgments", arr}};
  write_file_atomic(pair_file(root_ / "judgments", record_id, critique_id), j.dump(2) + "\n");
}

std::optional<std::vector<Judgment>> Store::get_judgments(const std::string& record_id,
                                                          const std::string& critique_id) {
  auto path = pair_file(root_ / "judgments", record_id, critique_id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  if (j.contains("template_checksums") &&
      checksums_from_json(j["template_checksums"]) != template_checksums_) {
    warnings_.push_back("judgments for (" + record_id + ", " + critique_id +
                        ") were produced under different prompt templates");
  }
  std::vector<Judgment> out;
  for (const auto& jd : j.at("judgments")) out.push_back(judgment_from_json(jd));
  return out;
}

std::filesystem::path Store::report_path(const std::string& record_id,
                                         const std::string& critique_id) const {
  return pair_file(root_ / "reports", record_id, critique_id);
}

void Store::put_report(const std::string& record_id, const std::string& critique_id,
                       const ScoreReport& report) {
  json j{{"schema_version", kSchemaVersion},
         {"record_id", record_id},
         {"critique_id", critique_id},
         {"template_checksums", checksums_to_json(template_checksums_)},
         {"report", json::parse(score_report_to_json_text(report))}};
  write_file_atomic(report_path(record_id, critique_id), j.dump(2) + "\n");
}

std::optional<ScoreReport> Store::get_report(const std::string& record_id,
                                             const std::string& critique_id) {
  auto path = report_path(record_id, critique_id);
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  if (j.contains("template_checksums") &&
      checksums_from_json(j["template_checksums"]) != template_checksums_) {
    warnings_.push_back("report for (" + record_id + ", " + critique_id +
                        ") was produced under different prompt templates");
  }
  return score_report_from_json_text(j.at("report").dump());
}

bool Store::has_report(const std::string& record_id, const std::string& critique_id) const {
  return std::filesystem::exists(report_path(record_id, critique_id));
}

void Store::write_manifest(const RunManifest& manifest) {
  json j{{"schema_version", kSchemaVersion},
         {"run_id", manifest.run_id},
         {"created_at", manifest.created_at},
         {"judge_model", manifest.judge_model},
         {"generator_model", manifest.generator_model},
         {"use_reference_answer", manifest.use_reference_answer},
         {"per_record_fanout", manifest.per_record_fanout},
         {"dataset_path", manifest.dataset_path},
         {"dataset_sha256", manifest.dataset_sha256},
         {"fixtures_path", manifest.fixtures_path},
         {"fixtures_sha256", manifest.fixtures_sha256},
         {"backend", manifest.backend},
         {"template_checksums", checksums_to_json(manifest.template_checksums)}};
  write_file_atomic(root_ / "run_manifest.json", j.dump(2) + "\n");
}

std::optional<RunManifest> Store::read_manifest() const {
  auto path = root_ / "run_manifest.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  json j = json::parse(read_file(path));
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.created_at = j.value("created_at", "");
  m.judge_model = j.value("judge_model", "");
  m.generator_model = j.value("generator_model", "");
  m.use_reference_answer = j.value("use_reference_answer", true);
  m.per_record_fanout = j.value("per_record_fanout", 1);
  m.dataset_path = j.value("dataset_path", "");
  m.dataset_sha256 = j.value("dataset_sha256", "");
  m.fixtures_path = j.value("fixtures_path", "");
  m.fixtures_sha256 = j.value("fixtures_sha256", "");
  m.backend = j.value("backend", "");
  if (j.contains("template_checksums")) {
    m.template_checksums = checksums_from_json(j["template_checksums"]);
  }
  return m;
}

}  // namespace metacritique
