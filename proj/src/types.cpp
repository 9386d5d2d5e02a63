#include "metacritique/types.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "metacritique/errors.hpp"

namespace metacritique {

namespace {

[[noreturn]] void bad_enum(const char* type, const std::string& value) {
  throw ValidationError(std::string("unknown ") + type + " value: '" + value + "'");
}

}  // namespace

const char* to_string(TaskDomain v) {
  switch (v) {
    case TaskDomain::entailment: return "entailment";
    case TaskDomain::reasoning: return "reasoning";
    case TaskDomain::question_answering: return "question_answering";
    case TaskDomain::summarization: return "summarization";
    case TaskDomain::other: return "other";
  }
  return "other";
}

const char* to_string(AnswerKind v) {
  switch (v) {
    case AnswerKind::model_generated: return "model_generated";
    case AnswerKind::reference: return "reference";
  }
  return "model_generated";
}

const char* to_string(CritiqueRole v) {
  switch (v) {
    case CritiqueRole::hypothesis: return "hypothesis";
    case CritiqueRole::reference: return "reference";
  }
  return "hypothesis";
}

const char* to_string(CritiqueAuthor v) {
  switch (v) {
    case CritiqueAuthor::human: return "human";
    case CritiqueAuthor::model: return "model";
  }
  return "model";
}

const char* to_string(JudgmentTask v) {
  switch (v) {
    case JudgmentTask::precision: return "precision";
    case JudgmentTask::recall: return "recall";
  }
  return "precision";
}

const char* to_string(AggregationLevel v) {
  switch (v) {
    case AggregationLevel::per_critique: return "per_critique";
    case AggregationLevel::micro: return "micro";
    case AggregationLevel::macro: return "macro";
  }
  return "per_critique";
}

const char* to_string(PairwiseChoice v) {
  switch (v) {
    case PairwiseChoice::A: return "A";
    case PairwiseChoice::B: return "B";
    case PairwiseChoice::Tie: return "Tie";
  }
  return "Tie";
}

TaskDomain task_domain_from_string(const std::string& s) {
  if (s == "entailment") return TaskDomain::entailment;
  if (s == "reasoning") return TaskDomain::reasoning;
  if (s == "question_answering") return TaskDomain::question_answering;
  if (s == "summarization") return TaskDomain::summarization;
  if (s == "other") return TaskDomain::other;
  bad_enum("task_domain", s);
}

AnswerKind answer_kind_from_string(const std::string& s) {
  if (s == "model_generated") return AnswerKind::model_generated;
  if (s == "reference") return AnswerKind::reference;
  bad_enum("answer kind", s);
}

CritiqueRole critique_role_from_string(const std::string& s) {
  if (s == "hypothesis") return CritiqueRole::hypothesis;
  if (s == "reference") return CritiqueRole::reference;
  bad_enum("critique role", s);
}

CritiqueAuthor critique_author_from_string(const std::string& s) {
  if (s == "human") return CritiqueAuthor::human;
  if (s == "model") return CritiqueAuthor::model;
  bad_enum("critique author", s);
}

JudgmentTask judgment_task_from_string(const std::string& s) {
  if (s == "precision") return JudgmentTask::precision;
  if (s == "recall") return JudgmentTask::recall;
  bad_enum("judgment task", s);
}

AggregationLevel aggregation_level_from_string(const std::string& s) {
  if (s == "per_critique") return AggregationLevel::per_critique;
  if (s == "micro") return AggregationLevel::micro;
  if (s == "macro") return AggregationLevel::macro;
  bad_enum("aggregation level", s);
}

PairwiseChoice pairwise_choice_from_string(const std::string& s) {
  if (s == "A") return PairwiseChoice::A;
  if (s == "B") return PairwiseChoice::B;
  if (s == "Tie") return PairwiseChoice::Tie;
  bad_enum("pairwise choice", s);
}

void EvalRecord::validate() const {
  if (question.id.empty()) throw ValidationError("record has empty question id");

  std::unordered_map<std::string, const Critique*> critique_by_id;
  int n_reference = 0;
  for (const auto& c : critiques) {
    if (c.id.empty()) throw ValidationError("critique with empty id in record " + question.id);
    if (!critique_by_id.emplace(c.id, &c).second) {
      throw ValidationError("duplicate critique id '" + c.id + "' in record " + question.id);
    }
    if (c.role == CritiqueRole::reference) ++n_reference;
  }
  if (n_reference > 1) {
    throw ValidationError("record " + question.id + " has more than one reference critique");
  }

  std::unordered_map<std::string, const Aiu*> aiu_by_id;
  std::unordered_map<std::string, std::vector<int>> indices_by_critique;
  for (const auto& a : aius) {
    if (a.id.empty()) throw ValidationError("AIU with empty id in record " + question.id);
    if (!aiu_by_id.emplace(a.id, &a).second) {
      throw ValidationError("duplicate AIU id '" + a.id + "' in record " + question.id);
    }
    if (critique_by_id.find(a.critique_id) == critique_by_id.end()) {
      throw ValidationError("AIU '" + a.id + "' references unknown critique '" + a.critique_id +
                            "'");
    }
    indices_by_critique[a.critique_id].push_back(a.index);
  }
  for (auto& [cid, idx] : indices_by_critique) {
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] != static_cast<int>(i)) {
        throw ValidationError("AIU indices for critique '" + cid +
                              "' are not dense from 0");
      }
    }
  }

  int n_hypothesis = 0;
  for (const auto& c : critiques) {
    if (c.role == CritiqueRole::hypothesis) ++n_hypothesis;
  }

  std::set<std::tuple<std::string, JudgmentTask, std::string, std::string>> seen;
  for (const auto& j : judgments) {
    auto it = aiu_by_id.find(j.aiu_id);
    if (it == aiu_by_id.end()) {
      throw ValidationError("judgment references unknown AIU '" + j.aiu_id + "'");
    }
    const Critique* c = critique_by_id.at(it->second->critique_id);
    // Precision judges hypothesis-critique AIUs; recall judges the reference
    // critique's AIUs.
    bool role_ok = (j.task == JudgmentTask::precision && c->role == CritiqueRole::hypothesis) ||
                   (j.task == JudgmentTask::recall && c->role == CritiqueRole::reference);
    if (!role_ok) {
      throw ValidationError("judgment task '" + std::string(to_string(j.task)) +
                            "' does not match role of critique '" + c->id + "'");
    }
    if (j.task == JudgmentTask::precision) {
      if (!j.premise_critique_id.empty()) {
        throw ValidationError("precision judgment for AIU '" + j.aiu_id +
                              "' must not set premise_critique_id");
      }
    } else if (j.premise_critique_id.empty()) {
      if (n_hypothesis > 1) {
        throw ValidationError("recall judgment for AIU '" + j.aiu_id +
                              "' needs premise_critique_id: record " + question.id +
                              " has several hypothesis critiques");
      }
    } else {
      auto pit = critique_by_id.find(j.premise_critique_id);
      if (pit == critique_by_id.end() || pit->second->role != CritiqueRole::hypothesis) {
        throw ValidationError("recall judgment premise '" + j.premise_critique_id +
                              "' is not a hypothesis critique of record " + question.id);
      }
    }
    if (!seen.insert({j.aiu_id, j.task, j.judge, j.premise_critique_id}).second) {
      throw ValidationError("duplicate judgment for AIU '" + j.aiu_id + "', task " +
                            to_string(j.task) + ", judge '" + j.judge + "'");
    }
    // Model judges must explain themselves; human annotators (judge names
    // prefixed "human") may record bare labels.
    if (j.rationale.empty() && j.judge.rfind("human", 0) != 0) {
      throw ValidationError("judgment for AIU '" + j.aiu_id + "' by judge '" + j.judge +
                            "' has an empty rationale");
    }
  }
}

const Critique* EvalRecord::find_critique(const std::string& critique_id) const {
  for (const auto& c : critiques) {
    if (c.id == critique_id) return &c;
  }
  return nullptr;
}

const Aiu* EvalRecord::find_aiu(const std::string& aiu_id) const {
  for (const auto& a : aius) {
    if (a.id == aiu_id) return &a;
  }
  return nullptr;
}

const Critique* EvalRecord::reference_critique() const {
  for (const auto& c : critiques) {
    if (c.role == CritiqueRole::reference) return &c;
  }
  return nullptr;
}

std::vector<const Critique*> EvalRecord::hypothesis_critiques() const {
  std::vector<const Critique*> out;
  for (const auto& c : critiques) {
    if (c.role == CritiqueRole::hypothesis) out.push_back(&c);
  }
  return out;
}

std::vector<Aiu> EvalRecord::aius_of(const std::string& critique_id) const {
  std::vector<Aiu> out;
  for (const auto& a : aius) {
    if (a.critique_id == critique_id) out.push_back(a);
  }
  std::sort(out.begin(), out.end(), [](const Aiu& l, const Aiu& r) { return l.index < r.index; });
  return out;
}

std::vector<Judgment> EvalRecord::judgments_for(const std::string& critique_id, JudgmentTask task,
                                                const std::string& judge) const {
  std::vector<Judgment> out;
  const Critique* ref = reference_critique();
  for (const auto& j : judgments) {
    if (j.task != task || j.judge != judge) continue;
    const Aiu* a = find_aiu(j.aiu_id);
    if (a == nullptr) continue;
    if (task == JudgmentTask::precision) {
      if (a->critique_id == critique_id) out.push_back(j);
    } else {
      // Recall rows live on the reference critique's AIUs but are scoped to
      // the hypothesis critique that served as premise.
      if (ref == nullptr || a->critique_id != ref->id) continue;
      if (j.premise_critique_id == critique_id || j.premise_critique_id.empty()) out.push_back(j);
    }
  }
  return out;
}

}  // namespace metacritique
