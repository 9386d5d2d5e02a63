#include "metacritique/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "metacritique/errors.hpp"
#include "metacritique/scoring.hpp"
#include "metacritique/util.hpp"

namespace metacritique {

const char* to_string(CorrelationMetric m) {
  switch (m) {
    case CorrelationMetric::pearson: return "pearson";
    case CorrelationMetric::spearman: return "spearman";
    case CorrelationMetric::kendall: return "kendall";
  }
  return "kendall";
}

CorrelationMetric correlation_metric_from_string(const std::string& s) {
  if (s == "pearson") return CorrelationMetric::pearson;
  if (s == "spearman") return CorrelationMetric::spearman;
  if (s == "kendall") return CorrelationMetric::kendall;
  throw ValidationError("unknown correlation metric: '" + s + "'");
}

namespace {

void check_paired_lengths(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw UndefinedStatError("series lengths differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
  }
  if (x.size() < 2) {
    throw UndefinedStatError("correlation needs at least 2 points, got " +
                             std::to_string(x.size()));
  }
}

// Merge sort that counts inversions (pairs out of order); equal elements are
// not inversions.
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch,
                              std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t count = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      count += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo),
            scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return count;
}

// Sum over tie groups of t*(t-1)/2, for a sorted key extractor.
template <typename Eq>
std::int64_t tie_pairs(std::size_t n, Eq same_group) {
  std::int64_t total = 0;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || !same_group(i - 1, i)) {
      std::int64_t t = static_cast<std::int64_t>(i - start);
      total += t * (t - 1) / 2;
      start = i;
    }
  }
  return total;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
  check_paired_lengths(x, y);
  std::size_t n = x.size();
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedStatError("pearson undefined: an input has zero variance");
  }
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // Positions i..j (0-based) share the mean of ranks i+1..j+1.
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_paired_lengths(x, y);
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  try {
    return pearson(rx, ry);
  } catch (const UndefinedStatError&) {
    throw UndefinedStatError("spearman undefined: an input has constant ranks");
  }
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_paired_lengths(x, y);
  std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }

  std::int64_t xtie = tie_pairs(n, [&](std::size_t a, std::size_t b) { return xs[a] == xs[b]; });
  std::int64_t xytie = tie_pairs(
      n, [&](std::size_t a, std::size_t b) { return xs[a] == xs[b] && ys[a] == ys[b]; });

  std::vector<double> ys_sorted = ys;
  std::sort(ys_sorted.begin(), ys_sorted.end());
  std::int64_t ytie = tie_pairs(
      n, [&](std::size_t a, std::size_t b) { return ys_sorted[a] == ys_sorted[b]; });

  // Discordant-ish swaps: inversions of y once sorted by (x, y). Pairs tied in
  // x contribute no inversion because y is ascending within each x group.
  std::vector<double> scratch(n);
  std::int64_t dis = count_inversions(ys, scratch, 0, n);

  std::int64_t tot = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;
  std::int64_t con_minus_dis = tot - xtie - ytie + xytie - 2 * dis;

  double denom_x = static_cast<double>(tot - xtie);
  double denom_y = static_cast<double>(tot - ytie);
  if (denom_x == 0.0 || denom_y == 0.0) {
    throw UndefinedStatError("kendall tau undefined: an input is constant");
  }
  double tau = static_cast<double>(con_minus_dis) / std::sqrt(denom_x * denom_y);
  return std::clamp(tau, -1.0, 1.0);
}

double correlation(CorrelationMetric metric, std::span<const double> x,
                   std::span<const double> y) {
  switch (metric) {
    case CorrelationMetric::pearson: return pearson(x, y);
    case CorrelationMetric::spearman: return spearman(x, y);
    case CorrelationMetric::kendall: return kendall_tau(x, y);
  }
  throw ValidationError("unknown correlation metric");
}

namespace {

// Reorders `series` values into the id order of `gold`. Throws when the id
// sets differ or an id repeats.
std::vector<double> align_to(const ScoreSeries& series, const ScoreSeries& gold) {
  if (series.ids.size() != series.values.size()) {
    throw ValidationError("series '" + series.method + "': ids and values lengths differ");
  }
  std::unordered_map<std::string, double> by_id;
  by_id.reserve(series.ids.size());
  for (std::size_t i = 0; i < series.ids.size(); ++i) {
    if (!by_id.emplace(series.ids[i], series.values[i]).second) {
      throw ValidationError("series '" + series.method + "': duplicate id '" + series.ids[i] +
                            "'");
    }
  }
  if (by_id.size() != gold.ids.size()) {
    throw ValidationError("series '" + series.method + "' and gold cover different items (" +
                          std::to_string(by_id.size()) + " vs " +
                          std::to_string(gold.ids.size()) + ")");
  }
  std::vector<double> out;
  out.reserve(gold.ids.size());
  for (const auto& id : gold.ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw ValidationError("series '" + series.method + "' is missing item '" + id + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void check_gold_ids(const ScoreSeries& gold) {
  if (gold.ids.size() != gold.values.size()) {
    throw ValidationError("gold series: ids and values lengths differ");
  }
  std::unordered_map<std::string, int> seen;
  for (const auto& id : gold.ids) {
    if (++seen[id] > 1) throw ValidationError("gold series: duplicate id '" + id + "'");
  }
}

constexpr int kMaxRedrawsPerResample = 1000;

std::uint64_t substream_seed(std::uint64_t seed, std::int64_t i) {
  return splitmix64(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1));
}

}  // namespace

SignificanceResult paired_bootstrap(const ScoreSeries& method_a, const ScoreSeries& method_b,
                                    const ScoreSeries& gold, CorrelationMetric metric,
                                    std::int64_t resamples, std::uint64_t seed) {
  if (resamples < 1) throw ValidationError("resamples must be >= 1");
  check_gold_ids(gold);
  std::vector<double> a = align_to(method_a, gold);
  std::vector<double> b = align_to(method_b, gold);
  const std::vector<double>& g = gold.values;
  std::size_t n = g.size();

  SignificanceResult result;
  result.method_a = method_a.method;
  result.method_b = method_b.method;
  result.metric = metric;
  result.resamples = resamples;
  result.seed = seed;
  result.observed_a = correlation(metric, a, g);
  result.observed_b = correlation(metric, b, g);
  result.observed_delta = result.observed_a - result.observed_b;

  // One-sided test of "method_a correlates with gold better than method_b":
  // p is the share of resamples where that advantage fails, ties at half
  // weight. Swapping the methods therefore maps p to exactly 1 - p.
  double fail_weight = 0.0;
  std::vector<double> ra(n), rb(n), rg(n);
  for (std::int64_t i = 0; i < resamples; ++i) {
    std::mt19937_64 rng(substream_seed(seed, i));
    int redraws = 0;
    while (true) {
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t idx = static_cast<std::size_t>(rng() % n);
        ra[k] = a[idx];
        rb[k] = b[idx];
        rg[k] = g[idx];
      }
      try {
        double delta = correlation(metric, ra, rg) - correlation(metric, rb, rg);
        if (delta < 0.0) {
          fail_weight += 1.0;
        } else if (delta == 0.0) {
          fail_weight += 0.5;
        }
        break;
      } catch (const UndefinedStatError&) {
        ++result.n_redrawn;
        if (++redraws > kMaxRedrawsPerResample) {
          throw UndefinedStatError(
              "bootstrap resample undefined after " + std::to_string(kMaxRedrawsPerResample) +
              " redraws; the series are too degenerate to test");
        }
      }
    }
  }
  result.p_value = fail_weight / static_cast<double>(resamples);
  return result;
}

SignificanceResult bootstrap_vs_zero(const ScoreSeries& method, const ScoreSeries& gold,
                                     CorrelationMetric metric, std::int64_t resamples,
                                     std::uint64_t seed) {
  if (resamples < 1) throw ValidationError("resamples must be >= 1");
  check_gold_ids(gold);
  std::vector<double> a = align_to(method, gold);
  const std::vector<double>& g = gold.values;
  std::size_t n = g.size();

  SignificanceResult result;
  result.method_a = method.method;
  result.method_b = "zero";
  result.metric = metric;
  result.resamples = resamples;
  result.seed = seed;
  result.observed_a = correlation(metric, a, g);
  result.observed_b = 0.0;
  result.observed_delta = result.observed_a;

  double fail_weight = 0.0;
  std::vector<double> ra(n), rg(n);
  for (std::int64_t i = 0; i < resamples; ++i) {
    std::mt19937_64 rng(substream_seed(seed, i));
    int redraws = 0;
    while (true) {
      for (std::size_t k = 0; k < n; ++k) {
        std::size_t idx = static_cast<std::size_t>(rng() % n);
        ra[k] = a[idx];
        rg[k] = g[idx];
      }
      try {
        double c = correlation(metric, ra, rg);
        if (c < 0.0) {
          fail_weight += 1.0;
        } else if (c == 0.0) {
          fail_weight += 0.5;
        }
        break;
      } catch (const UndefinedStatError&) {
        ++result.n_redrawn;
        if (++redraws > kMaxRedrawsPerResample) {
          throw UndefinedStatError(
              "bootstrap resample undefined after " + std::to_string(kMaxRedrawsPerResample) +
              " redraws; the series are too degenerate to test");
        }
      }
    }
  }
  result.p_value = fail_weight / static_cast<double>(resamples);
  return result;
}

double agreement_rate(std::span<const PairwiseChoice> chosen,
                      std::span<const PairwiseChoice> gold) {
  if (chosen.size() != gold.size()) {
    throw ValidationError("agreement_rate: sequences have different lengths");
  }
  if (chosen.empty()) throw ValidationError("agreement_rate: empty sequences");
  std::size_t matches = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    if (chosen[i] == gold[i]) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(chosen.size());
}

const char* to_string(RefinementOutcome v) {
  switch (v) {
    case RefinementOutcome::win: return "win";
    case RefinementOutcome::tie: return "tie";
    case RefinementOutcome::loss: return "loss";
  }
  return "tie";
}

RefinementOutcome refinement_outcome_from_string(const std::string& s) {
  if (s == "win") return RefinementOutcome::win;
  if (s == "tie") return RefinementOutcome::tie;
  if (s == "loss") return RefinementOutcome::loss;
  throw ValidationError("unknown refinement outcome: '" + s + "'");
}

WinRateTable win_rate_table(std::span<const RefinementOutcome> outcomes) {
  WinRateTable t;
  t.n = static_cast<std::int64_t>(outcomes.size());
  if (t.n == 0) throw ValidationError("win_rate_table: no outcomes");
  for (auto o : outcomes) {
    switch (o) {
      case RefinementOutcome::win: ++t.wins; break;
      case RefinementOutcome::tie: ++t.ties; break;
      case RefinementOutcome::loss: ++t.losses; break;
    }
  }
  double n = static_cast<double>(t.n);
  t.win_pct = 100.0 * static_cast<double>(t.wins) / n;
  t.tie_pct = 100.0 * static_cast<double>(t.ties) / n;
  t.loss_pct = 100.0 * static_cast<double>(t.losses) / n;
  return t;
}

std::vector<LeaderboardRow> leaderboard(
    const std::map<std::string, std::vector<ScoreReport>>& per_model_reports) {
  std::vector<LeaderboardRow> rows;
  rows.reserve(per_model_reports.size());
  for (const auto& [model, reports] : per_model_reports) {
    if (reports.empty()) continue;
    LeaderboardRow row;
    row.model = model;
    row.scores = aggregate_macro(reports);
    row.n_critiques = static_cast<std::int64_t>(reports.size());
    rows.push_back(std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const LeaderboardRow& l, const LeaderboardRow& r) {
    if (l.scores.f1 != r.scores.f1) return l.scores.f1 > r.scores.f1;
    double lp = l.scores.precision.value_or(0.0);
    double rp = r.scores.precision.value_or(0.0);
    if (lp != rp) return lp > rp;
    return l.model < r.model;
  });
  return rows;
}

std::string render_leaderboard(std::span<const LeaderboardRow> rows) {
  std::size_t name_width = 5;  // "Model"
  for (const auto& row : rows) name_width = std::max(name_width, row.model.size());

  std::ostringstream out;
  auto pad = [&](const std::string& s, std::size_t w) {
    out << s;
    for (std::size_t i = s.size(); i < w; ++i) out << ' ';
  };
  auto right = [&](const std::string& s, std::size_t w) {
    for (std::size_t i = s.size(); i < w; ++i) out << ' ';
    out << s;
  };
  constexpr std::size_t col = 11;

  pad("Model", name_width);
  right("Precision", col);
  right("Recall", col);
  right("F1", col);
  out << "\n";
  for (const auto& row : rows) {
    pad(row.model, name_width);
    right(row.scores.precision ? format_pct(*row.scores.precision) : "-", col);
    right(row.scores.recall ? format_pct(*row.scores.recall) : "-", col);
    right(format_pct(row.scores.f1), col);
    out << "\n";
  }
  return out.str();
}

}  // namespace metacritique
