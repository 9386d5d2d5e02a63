#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metacritique/types.hpp"

namespace metacritique {

enum class CorrelationMetric {
  pearson,
  spearman,
  kendall,
};

const char* to_string(CorrelationMetric m);
CorrelationMetric correlation_metric_from_string(const std::string& s);

// Scores from one method over a set of items. ids and values are parallel;
// series are aligned by id before any paired statistic.
struct ScoreSeries {
  std::string method;
  std::vector<std::string> ids;
  std::vector<double> values;
};

struct SignificanceResult {
  std::string method_a;
  std::string method_b;
  CorrelationMetric metric = CorrelationMetric::kendall;
  double observed_a = 0.0;
  double observed_b = 0.0;
  double observed_delta = 0.0;
  double p_value = 0.0;
  std::int64_t resamples = 0;
  std::uint64_t seed = 0;
  // Resamples that had to be redrawn because a correlation was undefined on
  // the drawn subsample (constant slice).
  std::int64_t n_redrawn = 0;
};

// Pearson product-moment correlation. Throws UndefinedStatError for n < 2,
// length mismatch, or zero variance in either input.
double pearson(std::span<const double> x, std::span<const double> y);

// Spearman rank correlation; ties receive the mean of the ranks they occupy.
double spearman(std::span<const double> x, std::span<const double> y);

// Kendall's tau-b, with the tie correction in the denominator.
double kendall_tau(std::span<const double> x, std::span<const double> y);

double correlation(CorrelationMetric metric, std::span<const double> x, std::span<const double> y);

// Average ranks (1-based) of the values; tied values share the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

// Paired bootstrap test of "method_a correlates with gold better than
// method_b" under the given metric. Items are resampled with replacement;
// each resample recomputes both correlations; the p-value is the fraction of
// resamples in which the observed advantage does not hold (ties between the
// two correlations count half). Resamples with an undefined correlation are
// redrawn and counted in n_redrawn. Deterministic for a given seed, including
// across thread counts: resample i always uses the i-th derived substream.
SignificanceResult paired_bootstrap(const ScoreSeries& method_a, const ScoreSeries& method_b,
                                    const ScoreSeries& gold, CorrelationMetric metric,
                                    std::int64_t resamples, std::uint64_t seed);

// One-sample analogue, testing "corr(method, gold) is positive": p-value is
// the share of resamples with a non-positive correlation, zeros at half
// weight. A method anti-correlated with gold therefore gets p near 1.
SignificanceResult bootstrap_vs_zero(const ScoreSeries& method, const ScoreSeries& gold,
                                     CorrelationMetric metric, std::int64_t resamples,
                                     std::uint64_t seed);

// Fraction of positions where the two choice sequences agree exactly; a Tie
// matches only a Tie.
double agreement_rate(std::span<const PairwiseChoice> chosen, std::span<const PairwiseChoice> gold);

enum class RefinementOutcome {
  win,
  tie,
  loss,
};

const char* to_string(RefinementOutcome v);
RefinementOutcome refinement_outcome_from_string(const std::string& s);

struct WinRateTable {
  std::int64_t n = 0;
  std::int64_t wins = 0;
  std::int64_t ties = 0;
  std::int64_t losses = 0;
  double win_pct = 0.0;
  double tie_pct = 0.0;
  double loss_pct = 0.0;
};

WinRateTable win_rate_table(std::span<const RefinementOutcome> outcomes);

struct LeaderboardRow {
  std::string model;
  ScoreReport scores;  // macro-level aggregate over the model's critiques
  std::int64_t n_critiques = 0;
};

// Ranks models by macro f1, descending; ties broken by macro precision, then
// by model name.
std::vector<LeaderboardRow> leaderboard(
    const std::map<std::string, std::vector<ScoreReport>>& per_model_reports);

// Fixed-width text table, columns Precision / Recall / F1 as percentages.
std::string render_leaderboard(std::span<const LeaderboardRow> rows);

}  // namespace metacritique
