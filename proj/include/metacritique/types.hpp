#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace metacritique {

enum class TaskDomain {
  entailment,
  reasoning,
  question_answering,
  summarization,
  other,
};

enum class AnswerKind {
  model_generated,
  reference,
};

enum class CritiqueRole {
  hypothesis,
  reference,
};

enum class CritiqueAuthor {
  human,
  model,
};

enum class JudgmentTask {
  precision,
  recall,
};

enum class AggregationLevel {
  per_critique,
  micro,
  macro,
};

// Verdict of a pairwise comparison. Tie is a first-class outcome, not the
// absence of one: agreement statistics count Tie as matching only Tie.
enum class PairwiseChoice {
  A,
  B,
  Tie,
};

const char* to_string(TaskDomain v);
const char* to_string(AnswerKind v);
const char* to_string(CritiqueRole v);
const char* to_string(CritiqueAuthor v);
const char* to_string(JudgmentTask v);
const char* to_string(AggregationLevel v);
const char* to_string(PairwiseChoice v);

TaskDomain task_domain_from_string(const std::string& s);
AnswerKind answer_kind_from_string(const std::string& s);
CritiqueRole critique_role_from_string(const std::string& s);
CritiqueAuthor critique_author_from_string(const std::string& s);
JudgmentTask judgment_task_from_string(const std::string& s);
AggregationLevel aggregation_level_from_string(const std::string& s);
PairwiseChoice pairwise_choice_from_string(const std::string& s);

struct Question {
  std::string id;
  std::string text;
  TaskDomain task_domain = TaskDomain::other;
  std::string source_dataset;
};

struct Answer {
  std::string text;
  AnswerKind kind = AnswerKind::model_generated;
};

struct Critique {
  std::string id;
  std::string text;
  CritiqueRole role = CritiqueRole::hypothesis;
  CritiqueAuthor author = CritiqueAuthor::model;
  std::string author_name;
};

// Atomic information unit: one self-contained claim split out of a critique.
// index is the 0-based position within its critique's extraction order.
struct Aiu {
  std::string id;
  std::string critique_id;
  int index = 0;
  std::string text;
};

// One binary verdict about one AIU. For precision the label means "factual",
// for recall it means "entailed by the hypothesis critique". rationale may be
// empty only for human-sourced labels (judge names prefixed "human").
//
// Recall verdicts depend on which hypothesis critique served as the premise,
// so records holding several hypothesis critiques scope their recall rows
// with premise_critique_id. It stays empty for precision rows (the AIU's own
// critique is the scope) and may be empty for recall rows in single-
// hypothesis records.
struct Judgment {
  std::string aiu_id;
  JudgmentTask task = JudgmentTask::precision;
  bool label = false;
  std::string rationale;
  std::string judge;
  std::string premise_critique_id;
};

// Scores for one critique or one aggregate. precision/recall are absent when
// the corresponding judgment pool is empty (0-of-0); f1 is still defined and
// set to 0 in that case. Counts are the exact integers behind the ratios for
// per_critique and micro reports; macro reports carry summed counts for
// reference but their ratios are means, not count quotients.
struct ScoreReport {
  std::optional<double> precision;
  std::optional<double> recall;
  double f1 = 0.0;
  std::int64_t n_hypo_aius = 0;
  std::int64_t n_factual = 0;
  std::int64_t n_ref_aius = 0;
  std::int64_t n_entailed = 0;
  std::int64_t n_flagged = 0;
  AggregationLevel level = AggregationLevel::per_critique;
};

// One evaluation unit: a question, the answer under critique, optional
// reference answer, and everything derived from them.
struct EvalRecord {
  Question question;
  Answer model_answer;
  std::optional<Answer> reference_answer;
  std::vector<Critique> critiques;
  std::vector<Aiu> aius;
  std::vector<Judgment> judgments;

  // Throws ValidationError when cross-references are broken: an AIU naming an
  // unknown critique, a judgment naming an unknown AIU, duplicate ids, AIU
  // indices that are not dense from 0, a judgment whose task does not match
  // its critique's role, or more than one reference critique.
  void validate() const;

  // Records are keyed by their question's id throughout the store and CLI.
  const std::string& record_id() const { return question.id; }

  const Critique* find_critique(const std::string& critique_id) const;
  const Aiu* find_aiu(const std::string& aiu_id) const;
  const Critique* reference_critique() const;
  std::vector<const Critique*> hypothesis_critiques() const;
  std::vector<Aiu> aius_of(const std::string& critique_id) const;
  std::vector<Judgment> judgments_for(const std::string& critique_id, JudgmentTask task,
                                      const std::string& judge) const;
};

struct PairwiseOutcome {
  std::string record_id;
  std::string method;
  PairwiseChoice chosen = PairwiseChoice::Tie;
};

}  // namespace metacritique
