#include "metacritique/scoring.hpp"

#include <set>
#include <string>
#include <unordered_map>

#include "metacritique/errors.hpp"

namespace metacritique {

double f1_score(double precision, double recall) {
  if (precision < 0.0 || precision > 1.0) {
    throw ValidationError("precision out of [0,1]: " + std::to_string(precision));
  }
  if (recall < 0.0 || recall > 1.0) {
    throw ValidationError("recall out of [0,1]: " + std::to_string(recall));
  }
  if (precision == 0.0 && recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

// Shared count-and-validate path for the two per-critique ratios.
struct Counted {
  std::int64_t total = 0;
  std::int64_t positive = 0;
};

Counted count_judgments(std::span<const Judgment> judgments, std::span<const Aiu> aius,
                        JudgmentTask expected_task) {
  std::unordered_map<std::string, const Aiu*> aiu_by_id;
  for (const auto& a : aius) aiu_by_id.emplace(a.id, &a);

  Counted counted;
  std::string critique_id;
  std::set<std::pair<std::string, std::string>> seen;  // (aiu_id, judge)
  for (const auto& j : judgments) {
    if (j.task != expected_task) {
      throw ValidationError(std::string("judgment task mismatch: expected ") +
                            to_string(expected_task) + ", got " + to_string(j.task) +
                            " for AIU '" + j.aiu_id + "'");
    }
    auto it = aiu_by_id.find(j.aiu_id);
    if (it == aiu_by_id.end()) {
      throw ValidationError("judgment references unknown AIU '" + j.aiu_id + "'");
    }
    const Aiu* a = it->second;
    if (critique_id.empty()) {
      critique_id = a->critique_id;
    } else if (a->critique_id != critique_id) {
      throw ValidationError("judgments span multiple critiques: '" + critique_id + "' and '" +
                            a->critique_id + "'");
    }
    if (!seen.insert({j.aiu_id, j.judge}).second) {
      throw ValidationError("duplicate judgment for AIU '" + j.aiu_id + "' by judge '" + j.judge +
                            "'");
    }
    ++counted.total;
    if (j.label) ++counted.positive;
  }
  return counted;
}

}  // namespace

ScoreReport precision_score(std::span<const Judgment> judgments, std::span<const Aiu> aius) {
  Counted c = count_judgments(judgments, aius, JudgmentTask::precision);
  ScoreReport report;
  report.level = AggregationLevel::per_critique;
  report.n_hypo_aius = c.total;
  report.n_factual = c.positive;
  if (c.total > 0) {
    report.precision = static_cast<double>(c.positive) / static_cast<double>(c.total);
  }
  return report;
}

ScoreReport recall_score(std::span<const Judgment> judgments, std::span<const Aiu> aius) {
  Counted c = count_judgments(judgments, aius, JudgmentTask::recall);
  ScoreReport report;
  report.level = AggregationLevel::per_critique;
  report.n_ref_aius = c.total;
  report.n_entailed = c.positive;
  if (c.total > 0) {
    report.recall = static_cast<double>(c.positive) / static_cast<double>(c.total);
  }
  return report;
}

ScoreReport combine_per_critique(const ScoreReport& precision_part,
                                 const ScoreReport& recall_part) {
  ScoreReport report;
  report.level = AggregationLevel::per_critique;
  report.precision = precision_part.precision;
  report.n_hypo_aius = precision_part.n_hypo_aius;
  report.n_factual = precision_part.n_factual;
  report.recall = recall_part.recall;
  report.n_ref_aius = recall_part.n_ref_aius;
  report.n_entailed = recall_part.n_entailed;
  report.n_flagged = precision_part.n_flagged + recall_part.n_flagged;
  report.f1 = f1_score(report.precision.value_or(0.0), report.recall.value_or(0.0));
  return report;
}

ScoreReport aggregate_micro(std::span<const ScoreReport> per_critique) {
  ScoreReport report;
  report.level = AggregationLevel::micro;
  for (const auto& r : per_critique) {
    if (r.level != AggregationLevel::per_critique) {
      throw ValidationError("aggregate_micro expects per-critique reports");
    }
    report.n_hypo_aius += r.n_hypo_aius;
    report.n_factual += r.n_factual;
    report.n_ref_aius += r.n_ref_aius;
    report.n_entailed += r.n_entailed;
    report.n_flagged += r.n_flagged;
  }
  if (report.n_hypo_aius > 0) {
    report.precision =
        static_cast<double>(report.n_factual) / static_cast<double>(report.n_hypo_aius);
  }
  if (report.n_ref_aius > 0) {
    report.recall =
        static_cast<double>(report.n_entailed) / static_cast<double>(report.n_ref_aius);
  }
  report.f1 = f1_score(report.precision.value_or(0.0), report.recall.value_or(0.0));
  return report;
}

ScoreReport aggregate_macro(std::span<const ScoreReport> per_critique) {
  ScoreReport report;
  report.level = AggregationLevel::macro;
  double sum_p = 0.0;
  std::int64_t n_p = 0;
  double sum_r = 0.0;
  std::int64_t n_r = 0;
  double sum_f1 = 0.0;
  std::int64_t n = 0;
  for (const auto& r : per_critique) {
    if (r.level != AggregationLevel::per_critique) {
      throw ValidationError("aggregate_macro expects per-critique reports");
    }
    if (r.precision) {
      sum_p += *r.precision;
      ++n_p;
    }
    if (r.recall) {
      sum_r += *r.recall;
      ++n_r;
    }
    sum_f1 += r.f1;
    ++n;
    report.n_hypo_aius += r.n_hypo_aius;
    report.n_factual += r.n_factual;
    report.n_ref_aius += r.n_ref_aius;
    report.n_entailed += r.n_entailed;
    report.n_flagged += r.n_flagged;
  }
  if (n_p > 0) report.precision = sum_p / static_cast<double>(n_p);
  if (n_r > 0) report.recall = sum_r / static_cast<double>(n_r);
  // Mean of per-critique f1, deliberately not the harmonic mean of the two
  // macro ratios above.
  report.f1 = (n > 0) ? sum_f1 / static_cast<double>(n) : 0.0;
  return report;
}

}  // namespace metacritique
