#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "metacritique/errors.hpp"
#include "metacritique/gateway.hpp"
#include "metacritique/prompting.hpp"
#include "metacritique/scoring.hpp"
#include "metacritique/store.hpp"
#include "metacritique/types.hpp"

namespace metacritique {

struct PipelineConfig {
  std::string judge_model = "gpt-4";
  std::string generator_model = "gpt-4";
  // When false, the precision prompt is rendered without any reference-answer
  // content (the slot reads "N/A").
  bool use_reference_answer = true;
  bool retry_on_parse_failure = true;
  int per_record_fanout = 4;  // >= 1; AIU judgments within a record run in parallel
  double temperature = 0.0;
  int max_tokens = 1024;
};

// How pairwise baselines handle position bias. double_run queries both
// orderings and returns Tie on disagreement; single_run asks once, matching
// the one-shot protocol.
enum class PairwiseProtocol {
  double_run,
  single_run,
};

struct FlaggedJudgment {
  std::string record_id;
  std::string aiu_id;
  JudgmentTask task = JudgmentTask::precision;
  std::string reason;
};

struct RecordError {
  std::string record_id;
  std::string message;
};

struct PipelineDiagnostics {
  std::int64_t parse_retries = 0;
  std::int64_t flagged_judgments = 0;
  std::int64_t empty_extractions = 0;
  std::vector<FlaggedJudgment> flagged;
  std::vector<RecordError> record_errors;
};

struct ScoredCritique {
  std::string record_id;
  std::string critique_id;
  std::string model;  // critique author_name
  ScoreReport report;
};

struct BatchResult {
  std::vector<ScoredCritique> rows;  // ordered by (record_id, critique_id)
  PipelineDiagnostics diagnostics;
  std::int64_t critiques_scored = 0;
  std::int64_t critiques_skipped = 0;  // had persisted reports already
  std::int64_t records_failed = 0;
};

// The three-step evaluation flow plus the prompting baselines. All methods
// are safe to call from the fanout threads they themselves spawn; diagnostics
// are guarded internally.
class Pipeline {
 public:
  Pipeline(Gateway& gateway, const TemplateLibrary& templates, PipelineConfig config);

  // Step 1: proxy reference generation.
  Answer generate_reference_answer(const Question& question);
  Critique generate_reference_critique(const Question& question, const Answer& model_answer);

  // Step 2: claim extraction. Returned AIUs carry ids "<critique_id>#<index>"
  // with indices dense from 0. An empty extraction is retried once with the
  // cache bypassed; still empty -> EmptyExtractionError.
  std::vector<Aiu> extract_aius(const Critique& critique);

  // Step 3: binary verdicts. Unparseable output is retried once with the
  // cache bypassed; still unparseable -> the parse error propagates (callers
  // that score whole critiques flag and exclude instead).
  Judgment judge_precision(const Question& question, const Answer& model_answer,
                           const std::optional<Answer>& reference_answer, const Aiu& aiu);
  Judgment judge_recall(const Critique& hypothesis, const Aiu& reference_aiu);

  // Judges every AIU relevant to one hypothesis critique of the record (its
  // own AIUs for precision, the reference critique's for recall) and scores
  // it. Judgments that stay unparseable are flagged, excluded from the
  // counts, and tallied in the report's n_flagged.
  struct ScoredHypothesis {
    ScoreReport report;
    std::vector<Judgment> judgments;
  };
  ScoredHypothesis score_hypothesis(const EvalRecord& record, const std::string& hypothesis_id);

  // Settles the record's reference answer (when configured to use one) and
  // reference critique: values already on the record win, then persisted
  // artifacts, then a fresh generation that is persisted immediately.
  void ensure_reference_artifacts(EvalRecord& record, Store& store);

  // Settles AIUs for every critique of the record the same way. A critique
  // whose extraction stays empty after the retry is left AIU-less and counted
  // in diagnostics.
  void ensure_aius(EvalRecord& record, Store& store);

  // Scores every hypothesis critique of every record, persisting reference
  // artifacts, AIUs, judgments and reports through the store. Reference
  // artifacts are generated once and persisted before any judging of the
  // record. Records whose reports are already persisted are skipped, which
  // makes an interrupted batch resumable. A failure inside one record is
  // caught and reported in the error manifest without aborting the rest.
  BatchResult run_batch(const std::vector<EvalRecord>& records, Store& store);

  // Prompting baselines.
  int baseline_single(const Question& question, const Answer& model_answer,
                      const Critique& critique);
  PairwiseOutcome baseline_pairwise(const Question& question, const Answer& model_answer,
                                    const Critique& critique_a, const Critique& critique_b,
                                    PairwiseProtocol protocol = PairwiseProtocol::double_run);

  // Critique-driven refinement and order-debiased comparison of refinements.
  Answer refine_answer(const Question& question, const Answer& model_answer,
                       const Critique& critique);
  PairwiseChoice compare_refinements(const Question& question, const Answer& refined_a,
                                     const Answer& refined_b,
                                     PairwiseProtocol protocol = PairwiseProtocol::double_run);

  PipelineDiagnostics diagnostics() const;
  const PipelineConfig& config() const { return config_; }

 private:
  void note_parse_retry();
  std::string precision_reference_slot(const std::optional<Answer>& reference_answer) const;

  // Runs the request, parses the completion, and on a ParseError retries once
  // with the cache bypassed before letting the error escape.
  template <typename Parse>
  auto complete_and_parse(const CompletionRequest& request, Parse&& parse) {
    auto first = gateway_.complete(request);
    try {
      return parse(first.text);
    } catch (const ParseError&) {
      if (!config_.retry_on_parse_failure) throw;
      note_parse_retry();
      auto second = gateway_.complete(request, CacheMode::bypass);
      return parse(second.text);
    }
  }

  Gateway& gateway_;
  const TemplateLibrary& templates_;
  PipelineConfig config_;
  mutable std::mutex diag_mutex_;
  PipelineDiagnostics diagnostics_;
};

// Derives per-critique reports from judgments already present on the records
// (e.g. human gold labels), using the same scoring path as the live pipeline.
// Judgments are filtered to the given judge name.
std::vector<ScoredCritique> score_from_judgments(const std::vector<EvalRecord>& records,
                                                 const std::string& judge);

}  // namespace metacritique
