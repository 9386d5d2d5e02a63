#pragma once

#include <span>
#include <vector>

#include "metacritique/types.hpp"

namespace metacritique {

// Harmonic mean of precision and recall. Both arguments must lie in [0, 1];
// f1(0, 0) is defined as 0.
double f1_score(double precision, double recall);

// Precision side of a per-critique report: fraction of factual AIUs among the
// judged AIUs of one hypothesis critique. All judgments must carry
// task=precision, resolve against `aius`, and agree on one critique id; a
// duplicate (aiu_id, judge) pair is rejected. Zero judgments leave precision
// absent. recall/f1 in the returned fragment are not meaningful until the
// fragment is combined.
ScoreReport precision_score(std::span<const Judgment> judgments, std::span<const Aiu> aius);

// Recall side: fraction of reference-critique AIUs entailed by the hypothesis
// critique. Same validation rules with task=recall.
ScoreReport recall_score(std::span<const Judgment> judgments, std::span<const Aiu> aius);

// Joins the two fragments of one critique into its full report, computing f1.
// A side whose ratio is absent contributes 0 to f1.
ScoreReport combine_per_critique(const ScoreReport& precision_part, const ScoreReport& recall_part);

// Micro aggregate: pool every AIU judgment across critiques into single
// factual/entailed counts, then apply the harmonic mean once.
ScoreReport aggregate_micro(std::span<const ScoreReport> per_critique);

// Macro aggregate: unweighted means over critiques. Macro precision/recall
// average only the critiques where the ratio is defined; macro f1 is the mean
// of the per-critique f1 values — *not* the harmonic mean of the macro
// precision and macro recall, which is a different (and wrong) number.
ScoreReport aggregate_macro(std::span<const ScoreReport> per_critique);

}  // namespace metacritique
