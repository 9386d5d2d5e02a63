#include "metacritique/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "metacritique/errors.hpp"

namespace metacritique {

namespace {

constexpr const char* kAssistantSystemPrompt = "You are a brilliant AI assistant.";
constexpr const char* kReferenceCritiqueId = "reference";
constexpr const char* kNoReferenceAnswer = "N/A";

std::string aiu_id_for(const std::string& critique_id, int index) {
  return critique_id + "#" + std::to_string(index);
}

}  // namespace

Pipeline::Pipeline(Gateway& gateway, const TemplateLibrary& templates, PipelineConfig config)
    : gateway_(gateway), templates_(templates), config_(std::move(config)) {
  if (config_.per_record_fanout < 1) {
    throw ValidationError("per_record_fanout must be >= 1");
  }
}

void Pipeline::note_parse_retry() {
  std::lock_guard lock(diag_mutex_);
  ++diagnostics_.parse_retries;
}

PipelineDiagnostics Pipeline::diagnostics() const {
  std::lock_guard lock(diag_mutex_);
  return diagnostics_;
}

Answer Pipeline::generate_reference_answer(const Question& question) {
  CompletionRequest request;
  request.model = config_.generator_model;
  request.temperature = config_.temperature;
  request.max_tokens = config_.max_tokens;
  request.messages.push_back({MessageRole::system, kAssistantSystemPrompt});
  request.messages.push_back({MessageRole::user, question.text});
  CompletionResult result = gateway_.complete(request);
  return Answer{result.text, AnswerKind::reference};
}

Critique Pipeline::generate_reference_critique(const Question& question,
                                               const Answer& model_answer) {
  CompletionRequest request = templates_.render(
      TemplateId::reference_critique,
      {{"question", question.text}, {"model-generated answer", model_answer.text}},
      config_.generator_model, config_.temperature, config_.max_tokens);
  CompletionResult result = gateway_.complete(request);
  Critique critique;
  critique.id = kReferenceCritiqueId;
  critique.text = result.text;
  critique.role = CritiqueRole::reference;
  critique.author = CritiqueAuthor::model;
  critique.author_name = config_.generator_model;
  return critique;
}

std::vector<Aiu> Pipeline::extract_aius(const Critique& critique) {
  if (critique.text.empty()) {
    throw ValidationError("critique '" + critique.id + "' has no text to extract from");
  }
  CompletionRequest request =
      templates_.render(TemplateId::aiu_extraction, {{"critique", critique.text}},
                        config_.judge_model, config_.temperature, config_.max_tokens);
  std::vector<std::string> claims =
      complete_and_parse(request, [](const std::string& text) { return parse_aiu_list(text); });
  std::vector<Aiu> aius;
  aius.reserve(claims.size());
  for (std::size_t i = 0; i < claims.size(); ++i) {
    Aiu aiu;
    aiu.id = aiu_id_for(critique.id, static_cast<int>(i));
    aiu.critique_id = critique.id;
    aiu.index = static_cast<int>(i);
    aiu.text = claims[i];
    aius.push_back(std::move(aiu));
  }
  return aius;
}

std::string Pipeline::precision_reference_slot(
    const std::optional<Answer>& reference_answer) const {
  if (!config_.use_reference_answer || !reference_answer) {
    return kNoReferenceAnswer;
  }
  return reference_answer->text;
}

Judgment Pipeline::judge_precision(const Question& question, const Answer& model_answer,
                                   const std::optional<Answer>& reference_answer,
                                   const Aiu& aiu) {
  CompletionRequest request = templates_.render(
      TemplateId::precision_task,
      {{"question", question.text},
       {"model-generated answer", model_answer.text},
       {"reference answer", precision_reference_slot(reference_answer)},
       {"AIU from hypothesis critique", aiu.text}},
      config_.judge_model, config_.temperature, config_.max_tokens);
  Verdict verdict =
      complete_and_parse(request, [](const std::string& text) { return parse_verdict(text); });
  Judgment judgment;
  judgment.aiu_id = aiu.id;
  judgment.task = JudgmentTask::precision;
  judgment.label = verdict.label;
  judgment.rationale = verdict.rationale;
  judgment.judge = config_.judge_model;
  return judgment;
}

Judgment Pipeline::judge_recall(const Critique& hypothesis, const Aiu& reference_aiu) {
  if (hypothesis.text.empty()) {
    throw ValidationError("hypothesis critique '" + hypothesis.id +
                          "' is empty; nothing to entail from");
  }
  CompletionRequest request = templates_.render(
      TemplateId::recall_task,
      {{"hypothesis critique", hypothesis.text}, {"AIU from reference critique", reference_aiu.text}},
      config_.judge_model, config_.temperature, config_.max_tokens);
  Verdict verdict =
      complete_and_parse(request, [](const std::string& text) { return parse_verdict(text); });
  Judgment judgment;
  judgment.aiu_id = reference_aiu.id;
  judgment.task = JudgmentTask::recall;
  judgment.label = verdict.label;
  judgment.rationale = verdict.rationale;
  judgment.judge = config_.judge_model;
  judgment.premise_critique_id = hypothesis.id;
  return judgment;
}

Pipeline::ScoredHypothesis Pipeline::score_hypothesis(const EvalRecord& record,
                                                      const std::string& hypothesis_id) {
  const Critique* hypothesis = record.find_critique(hypothesis_id);
  if (hypothesis == nullptr) {
    throw ValidationError("record " + record.record_id() + " has no critique '" + hypothesis_id +
                          "'");
  }
  if (hypothesis->role != CritiqueRole::hypothesis) {
    throw ValidationError("critique '" + hypothesis_id + "' is not a hypothesis critique");
  }

  std::vector<Aiu> hypo_aius = record.aius_of(hypothesis_id);
  std::vector<Aiu> ref_aius;
  if (const Critique* ref = record.reference_critique()) {
    ref_aius = record.aius_of(ref->id);
  }

  // One slot per judgment job so the fanout order never affects the output.
  struct Job {
    JudgmentTask task;
    const Aiu* aiu;
    std::optional<Judgment> judgment;
    std::optional<std::string> flag_reason;
  };
  std::vector<Job> jobs;
  jobs.reserve(hypo_aius.size() + ref_aius.size());
  for (const auto& a : hypo_aius) jobs.push_back({JudgmentTask::precision, &a, {}, {}});
  for (const auto& a : ref_aius) jobs.push_back({JudgmentTask::recall, &a, {}, {}});

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      Job& job = jobs[i];
      try {
        if (job.task == JudgmentTask::precision) {
          job.judgment = judge_precision(record.question, record.model_answer,
                                         record.reference_answer, *job.aiu);
        } else {
          job.judgment = judge_recall(*hypothesis, *job.aiu);
        }
      } catch (const ParseError& e) {
        job.flag_reason = e.what();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  int n_threads = std::min<int>(config_.per_record_fanout, static_cast<int>(jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ScoredHypothesis scored;
  std::vector<Judgment> precision_judgments;
  std::vector<Judgment> recall_judgments;
  std::int64_t flagged_here = 0;
  for (const auto& job : jobs) {
    if (job.flag_reason) {
      ++flagged_here;
      std::lock_guard lock(diag_mutex_);
      ++diagnostics_.flagged_judgments;
      diagnostics_.flagged.push_back(
          {record.record_id(), job.aiu->id, job.task, *job.flag_reason});
      continue;
    }
    if (job.task == JudgmentTask::precision) {
      precision_judgments.push_back(*job.judgment);
    } else {
      recall_judgments.push_back(*job.judgment);
    }
  }

  ScoreReport p = precision_score(precision_judgments, hypo_aius);
  ScoreReport r = recall_score(recall_judgments, ref_aius);
  scored.report = combine_per_critique(p, r);
  scored.report.n_flagged = flagged_here;
  scored.judgments = std::move(precision_judgments);
  scored.judgments.insert(scored.judgments.end(), recall_judgments.begin(),
                          recall_judgments.end());
  return scored;
}

void Pipeline::ensure_reference_artifacts(EvalRecord& record, Store& store) {
  const std::string& rid = record.record_id();
  // Values already on the record win, then persisted artifacts, then a fresh
  // generation that is persisted immediately.
  if (config_.use_reference_answer && !record.reference_answer) {
    if (auto stored = store.get_reference_answer(rid)) {
      record.reference_answer = *stored;
    } else {
      Answer generated = generate_reference_answer(record.question);
      store.put_reference_answer(rid, generated);
      record.reference_answer = generated;
    }
  }

  if (record.reference_critique() == nullptr) {
    if (auto stored = store.get_reference_critique(rid)) {
      record.critiques.push_back(*stored);
    } else {
      Critique generated = generate_reference_critique(record.question, record.model_answer);
      store.put_reference_critique(rid, generated);
      record.critiques.push_back(generated);
    }
  }
}

void Pipeline::ensure_aius(EvalRecord& record, Store& store) {
  const std::string& rid = record.record_id();
  for (const auto& critique : record.critiques) {
    if (!record.aius_of(critique.id).empty()) continue;
    if (auto stored = store.get_aius(rid, critique.id)) {
      record.aius.insert(record.aius.end(), stored->begin(), stored->end());
      continue;
    }
    try {
      std::vector<Aiu> extracted = extract_aius(critique);
      store.put_aius(rid, critique.id, extracted);
      record.aius.insert(record.aius.end(), extracted.begin(), extracted.end());
    } catch (const EmptyExtractionError&) {
      // The critique stays AIU-less; scoring will mark the side absent.
      store.put_aius(rid, critique.id, {});
      std::lock_guard lock(diag_mutex_);
      ++diagnostics_.empty_extractions;
    }
  }
}

BatchResult Pipeline::run_batch(const std::vector<EvalRecord>& records, Store& store) {
  BatchResult batch;

  std::vector<const EvalRecord*> ordered;
  ordered.reserve(records.size());
  for (const auto& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const EvalRecord* a, const EvalRecord* b) {
    return a->record_id() < b->record_id();
  });

  for (const EvalRecord* source : ordered) {
    const std::string& rid = source->record_id();
    try {
      EvalRecord record = *source;

      // Reference artifacts are settled before any judging of the record.
      ensure_reference_artifacts(record, store);
      ensure_aius(record, store);

      std::vector<const Critique*> hypotheses = record.hypothesis_critiques();
      std::sort(hypotheses.begin(), hypotheses.end(),
                [](const Critique* a, const Critique* b) { return a->id < b->id; });
      for (const Critique* hyp : hypotheses) {
        ScoredCritique row;
        row.record_id = rid;
        row.critique_id = hyp->id;
        row.model = hyp->author_name;
        if (auto existing = store.get_report(rid, hyp->id)) {
          row.report = *existing;
          ++batch.critiques_skipped;
        } else {
          ScoredHypothesis scored = score_hypothesis(record, hyp->id);
          store.put_judgments(rid, hyp->id, scored.judgments);
          store.put_report(rid, hyp->id, scored.report);
          row.report = scored.report;
          ++batch.critiques_scored;
        }
        batch.rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      ++batch.records_failed;
      std::lock_guard lock(diag_mutex_);
      diagnostics_.record_errors.push_back({rid, e.what()});
    }
  }

  std::sort(batch.rows.begin(), batch.rows.end(),
            [](const ScoredCritique& a, const ScoredCritique& b) {
              if (a.record_id != b.record_id) return a.record_id < b.record_id;
              return a.critique_id < b.critique_id;
            });
  batch.diagnostics = diagnostics();
  return batch;
}

int Pipeline::baseline_single(const Question& question, const Answer& model_answer,
                              const Critique& critique) {
  CompletionRequest request = templates_.render(
      TemplateId::single_rating,
      {{"question", question.text},
       {"model-generated answer", model_answer.text},
       {"hypothesis critique from LLM", critique.text}},
      config_.judge_model, config_.temperature, config_.max_tokens);
  return complete_and_parse(request,
                            [](const std::string& text) { return parse_likert(text); });
}

namespace {

// Maps a verdict expressed for swapped inputs back to the caller's (A, B).
PairwiseChoice unswap(PairwiseChoice swapped) {
  switch (swapped) {
    case PairwiseChoice::A: return PairwiseChoice::B;
    case PairwiseChoice::B: return PairwiseChoice::A;
    case PairwiseChoice::Tie: return PairwiseChoice::Tie;
  }
  return PairwiseChoice::Tie;
}

}  // namespace

PairwiseOutcome Pipeline::baseline_pairwise(const Question& question, const Answer& model_answer,
                                            const Critique& critique_a,
                                            const Critique& critique_b,
                                            PairwiseProtocol protocol) {
  auto ask = [&](const Critique& first, const Critique& second) {
    CompletionRequest request = templates_.render(
        TemplateId::pairwise_rating,
        {{"question", question.text},
         {"model-generated answer", model_answer.text},
         {"hypothesis critique from LLM 1", first.text},
         {"hypothesis critique from LLM 2", second.text}},
        config_.judge_model, config_.temperature, config_.max_tokens);
    return complete_and_parse(
        request, [](const std::string& text) { return parse_pairwise_verdict(text); });
  };

  PairwiseChoice forward = ask(critique_a, critique_b);
  PairwiseChoice chosen;
  if (protocol == PairwiseProtocol::single_run) {
    chosen = forward;
  } else {
    PairwiseChoice backward = unswap(ask(critique_b, critique_a));
    chosen = (forward == backward) ? forward : PairwiseChoice::Tie;
  }

  PairwiseOutcome outcome;
  outcome.record_id = question.id;
  outcome.method = "pairwise:" + config_.judge_model;
  outcome.chosen = chosen;
  return outcome;
}

Answer Pipeline::refine_answer(const Question& question, const Answer& model_answer,
                               const Critique& critique) {
  CompletionRequest request = templates_.render(
      TemplateId::refine_answer,
      {{"question", question.text},
       {"model-generated answer", model_answer.text},
       {"hypothesis critique from LLM", critique.text}},
      config_.generator_model, config_.temperature, config_.max_tokens);
  CompletionResult result = gateway_.complete(request);
  return Answer{result.text, AnswerKind::model_generated};
}

PairwiseChoice Pipeline::compare_refinements(const Question& question, const Answer& refined_a,
                                             const Answer& refined_b,
                                             PairwiseProtocol protocol) {
  auto ask = [&](const Answer& first, const Answer& second) {
    CompletionRequest request = templates_.render(
        TemplateId::eval_refined_pair,
        {{"question", question.text},
         {"refined answer from the LLM 1 critique", first.text},
         {"refined answer from the LLM 2 critique", second.text}},
        config_.judge_model, config_.temperature, config_.max_tokens);
    return complete_and_parse(
        request, [](const std::string& text) { return parse_pairwise_verdict(text); });
  };

  PairwiseChoice forward = ask(refined_a, refined_b);
  if (protocol == PairwiseProtocol::single_run) return forward;
  PairwiseChoice backward = unswap(ask(refined_b, refined_a));
  return (forward == backward) ? forward : PairwiseChoice::Tie;
}

std::vector<ScoredCritique> score_from_judgments(const std::vector<EvalRecord>& records,
                                                 const std::string& judge) {
  std::vector<ScoredCritique> rows;
  for (const auto& record : records) {
    const Critique* ref = record.reference_critique();
    std::vector<Aiu> ref_aius = ref ? record.aius_of(ref->id) : std::vector<Aiu>{};
    for (const Critique* hyp : record.hypothesis_critiques()) {
      std::vector<Aiu> hypo_aius = record.aius_of(hyp->id);
      std::vector<Judgment> p_rows =
          record.judgments_for(hyp->id, JudgmentTask::precision, judge);
      std::vector<Judgment> r_rows = record.judgments_for(hyp->id, JudgmentTask::recall, judge);
      ScoreReport p = precision_score(p_rows, hypo_aius);
      ScoreReport r = recall_score(r_rows, ref_aius);
      ScoredCritique row;
      row.record_id = record.record_id();
      row.critique_id = hyp->id;
      row.model = hyp->author_name;
      row.report = combine_per_critique(p, r);
      rows.push_back(std::move(row));
    }
  }
  std::sort(rows.begin(), rows.end(), [](const ScoredCritique& a, const ScoredCritique& b) {
    if (a.record_id != b.record_id) return a.record_id < b.record_id;
    return a.critique_id < b.critique_id;
  });
  return rows;
}

}  // namespace metacritique
