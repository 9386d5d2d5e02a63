#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metacritique/types.hpp"

namespace metacritique {

inline constexpr int kSchemaVersion = 1;

struct LoadIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct DatasetLoadResult {
  std::vector<EvalRecord> records;
  std::vector<LoadIssue> issues;
  bool empty_file = false;
};

// Reads a JSONL dataset (one EvalRecord per line). Malformed lines, schema
// mismatches, validation failures and duplicate record ids are collected as
// per-line issues instead of aborting; valid records still load. An empty
// file yields zero records and the empty_file flag, not an error.
DatasetLoadResult load_dataset(const std::filesystem::path& path);

// Writes records as JSONL, one per line, atomically.
void save_dataset(const std::filesystem::path& path, std::span<const EvalRecord> records);

std::string to_jsonl_line(const EvalRecord& record);
EvalRecord record_from_json_text(const std::string& line);

struct RunManifest {
  std::string run_id;
  std::string created_at;  // ISO 8601 UTC
  std::string judge_model;
  std::string generator_model;
  bool use_reference_answer = true;
  int per_record_fanout = 1;
  std::string dataset_path;
  std::string dataset_sha256;
  std::string fixtures_path;    // empty for live backends
  std::string fixtures_sha256;  // empty for live backends
  std::string backend;
  std::map<std::string, std::string> template_checksums;
};

// Holds the per-run lock file; releases it on destruction.
class RunLock {
 public:
  RunLock() = default;
  explicit RunLock(std::filesystem::path path);
  ~RunLock();
  RunLock(RunLock&& other) noexcept;
  RunLock& operator=(RunLock&& other) noexcept;
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
  bool held_ = false;
};

// Filesystem layout for one run's artifacts, rooted at an output directory:
//
//   answers/<record>.json          generated reference answers
//   critiques/<record>.json        generated reference critiques
//   aius/<record>__<critique>.json extracted AIUs per critique
//   judgments/<record>__<critique>.json
//   reports/<record>__<critique>.json
//   scores.jsonl                   one row per scored critique
//   run_manifest.json
//   .lock
//
// Every write is temp-file-then-rename. Judgment and report files are stamped
// with the template checksums that produced them; reading one written under
// different checksums records a compatibility warning.
class Store {
 public:
  explicit Store(std::filesystem::path root,
                 std::map<std::string, std::string> template_checksums = {});

  const std::filesystem::path& root() const { return root_; }

  // Acquire the per-run lock (throws LockError when already held).
  RunLock lock();

  void put_reference_answer(const std::string& record_id, const Answer& answer);
  std::optional<Answer> get_reference_answer(const std::string& record_id) const;

  void put_reference_critique(const std::string& record_id, const Critique& critique);
  std::optional<Critique> get_reference_critique(const std::string& record_id) const;

  void put_aius(const std::string& record_id, const std::string& critique_id,
                std::span<const Aiu> aius);
  std::optional<std::vector<Aiu>> get_aius(const std::string& record_id,
                                           const std::string& critique_id) const;

  void put_judgments(const std::string& record_id, const std::string& critique_id,
                     std::span<const Judgment> judgments);
  std::optional<std::vector<Judgment>> get_judgments(const std::string& record_id,
                                                     const std::string& critique_id);

  void put_report(const std::string& record_id, const std::string& critique_id,
                  const ScoreReport& report);
  std::optional<ScoreReport> get_report(const std::string& record_id,
                                        const std::string& critique_id);
  bool has_report(const std::string& record_id, const std::string& critique_id) const;
  std::filesystem::path report_path(const std::string& record_id,
                                    const std::string& critique_id) const;

  void write_manifest(const RunManifest& manifest);
  std::optional<RunManifest> read_manifest() const;

  // Warnings accumulated by reads (template checksum mismatches).
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> template_checksums_;
  std::vector<std::string> warnings_;
};

// Serialization helpers shared by the store, dataset I/O and the CLI.
std::string score_report_to_json_text(const ScoreReport& report);
ScoreReport score_report_from_json_text(const std::string& text);

}  // namespace metacritique
