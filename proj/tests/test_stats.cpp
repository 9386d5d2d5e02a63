#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

#include "metacritique/errors.hpp"
#include "metacritique/scoring.hpp"
#include "metacritique/stats.hpp"

using namespace metacritique;

// Definitional oracles, deliberately written along different arithmetic
// routes than the library.
namespace oracle {

double pearson_sums(const std::vector<double>& x, const std::vector<double>& y) {
  double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  double num = n * sxy - sx * sy;
  double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  return num / den;
}

std::vector<double> ranks_brute(const std::vector<double>& v) {
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t below = 0, equal = 0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) ++below;
      if (v[j] == v[i]) ++equal;
    }
    ranks[i] = static_cast<double>(below) + (static_cast<double>(equal) - 1.0) / 2.0 + 1.0;
  }
  return ranks;
}

double spearman_brute(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson_sums(ranks_brute(x), ranks_brute(y));
}

double kendall_pairs(const std::vector<double>& x, const std::vector<double>& y) {
  std::int64_t concordant = 0, discordant = 0, tied_x = 0, tied_y = 0;
  std::size_t n = x.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dx = x[i] - x[j];
      double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++tied_x;
        ++tied_y;
      } else if (dx == 0) {
        ++tied_x;
      } else if (dy == 0) {
        ++tied_y;
      } else if (dx * dy > 0) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  }
  std::int64_t tot = static_cast<std::int64_t>(n) * (static_cast<std::int64_t>(n) - 1) / 2;
  double den = std::sqrt(static_cast<double>(tot - tied_x) * static_cast<double>(tot - tied_y));
  return static_cast<double>(concordant - discordant) / den;
}

}  // namespace oracle

TEST_CASE("correlations match brute-force oracles on random data") {
  std::mt19937_64 rng(20240817);
  std::uniform_int_distribution<int> len_dist(2, 200);
  std::uniform_real_distribution<double> real_dist(0.0, 100.0);
  std::uniform_int_distribution<int> grid_dist(0, 4);
  std::bernoulli_distribution use_grid(0.5);

  int tested = 0;
  for (int trial = 0; trial < 150 && tested < 120; ++trial) {
    int n = len_dist(rng);
    std::vector<double> x(n), y(n);
    bool gx = use_grid(rng), gy = use_grid(rng);
    for (int i = 0; i < n; ++i) {
      x[i] = gx ? static_cast<double>(grid_dist(rng)) : real_dist(rng);
      y[i] = gy ? static_cast<double>(grid_dist(rng)) : real_dist(rng);
    }
    // Constant vectors have no defined correlation; make them non-constant.
    x[0] += 1.0;
    y[n - 1] += 1.0;

    CAPTURE(trial);
    CAPTURE(n);
    CHECK(std::abs(pearson(x, y) - oracle::pearson_sums(x, y)) <= 1e-12);
    CHECK(std::abs(spearman(x, y) - oracle::spearman_brute(x, y)) <= 1e-12);
    CHECK(std::abs(kendall_tau(x, y) - oracle::kendall_pairs(x, y)) <= 1e-12);
    ++tested;
  }
  CHECK(tested >= 100);
}

TEST_CASE("spearman worked example without ties") {
  std::vector<double> x = {1, 2, 3};
  std::vector<double> y = {3, 1, 2};
  // No ties, so the closed form 1 - 6*sum(d^2)/(n(n^2-1)) applies exactly.
  double d0 = 1 - 3, d1 = 2 - 1, d2 = 3 - 2;
  double closed = 1.0 - 6.0 * (d0 * d0 + d1 * d1 + d2 * d2) / (3.0 * (9.0 - 1.0));
  CHECK(closed == -0.5);
  CHECK(spearman(x, y) == closed);
}

TEST_CASE("rank assignment averages over ties") {
  std::vector<double> v = {10, 20, 20, 30};
  std::vector<double> r = average_ranks(v);
  CHECK(r == std::vector<double>{1.0, 2.5, 2.5, 4.0});
}

TEST_CASE("kendall handles exact small cases") {
  CHECK(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 1.0);
  CHECK(kendall_tau(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == -1.0);
  // 5 concordant pairs, 1 discordant.
  std::vector<double> x = {1, 2, 3, 4};
  std::vector<double> y = {1, 3, 2, 4};
  CHECK(std::abs(kendall_tau(x, y) - 4.0 / 6.0) <= 1e-15);
  // Tie-corrected denominator.
  std::vector<double> xt = {1, 1, 2, 3};
  std::vector<double> yt = {1, 2, 2, 3};
  CHECK(std::abs(kendall_tau(xt, yt) - 0.8) <= 1e-15);
}

TEST_CASE("correlations reject degenerate input") {
  std::vector<double> constant = {2, 2, 2};
  std::vector<double> rising = {1, 2, 3};
  std::vector<double> one = {1};
  CHECK_THROWS_AS(pearson(constant, rising), UndefinedStatError);
  CHECK_THROWS_AS(spearman(rising, constant), UndefinedStatError);
  CHECK_THROWS_AS(kendall_tau(constant, rising), UndefinedStatError);
  CHECK_THROWS_AS(pearson(one, one), UndefinedStatError);
  std::vector<double> two = {1, 2};
  CHECK_THROWS_AS(pearson(two, rising), UndefinedStatError);
}

TEST_CASE("correlations are symmetric and monotone-invariant") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> x(40), y(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = dist(rng);
    y[i] = dist(rng);
  }
  CHECK(pearson(x, y) == pearson(y, x));
  CHECK(spearman(x, y) == spearman(y, x));
  CHECK(kendall_tau(x, y) == kendall_tau(y, x));

  // Strictly increasing transform of x leaves the rank statistics unchanged.
  std::vector<double> tx(40);
  for (int i = 0; i < 40; ++i) tx[i] = 3.0 * x[i] + 7.0;
  CHECK(std::abs(spearman(tx, y) - spearman(x, y)) <= 1e-12);
  CHECK(kendall_tau(tx, y) == kendall_tau(x, y));
  CHECK(std::abs(pearson(tx, y) - pearson(x, y)) <= 1e-12);
}

namespace {

ScoreSeries series(const std::string& method, const std::vector<double>& values) {
  ScoreSeries s;
  s.method = method;
  s.values = values;
  for (std::size_t i = 0; i < values.size(); ++i) s.ids.push_back("item" + std::to_string(i));
  return s;
}

}  // namespace

TEST_CASE("bootstrap: identical methods sit exactly at p = 0.5") {
  std::vector<double> gold_values = {3, 1, 4, 1, 5, 9, 2, 6, 5, 3.5, 8, 7};
  std::vector<double> m = {2, 1, 4, 2, 5, 8, 2.5, 6, 5, 3, 7, 9};
  ScoreSeries g = series("gold", gold_values);
  ScoreSeries a = series("a", m);
  ScoreSeries b = series("b", m);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SignificanceResult r = paired_bootstrap(a, b, g, CorrelationMetric::kendall, 200, seed);
    CHECK(r.p_value == 0.5);
  }
}

TEST_CASE("bootstrap: perfectly aligned beats anti-aligned") {
  std::vector<double> gold_values;
  for (int i = 0; i < 30; ++i) gold_values.push_back(static_cast<double>(i) + 0.25);
  std::vector<double> anti(gold_values.size());
  for (std::size_t i = 0; i < gold_values.size(); ++i) anti[i] = -gold_values[i];
  ScoreSeries g = series("gold", gold_values);
  ScoreSeries a = series("aligned", gold_values);
  ScoreSeries b = series("anti", anti);
  for (CorrelationMetric metric :
       {CorrelationMetric::pearson, CorrelationMetric::spearman, CorrelationMetric::kendall}) {
    SignificanceResult r = paired_bootstrap(a, b, g, metric, 1000, 42);
    CHECK(r.p_value < 0.05);
    CHECK(r.observed_delta == 2.0);
  }
}

TEST_CASE("bootstrap: deterministic under a fixed seed") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> gv(25), av(25), bv(25);
  for (int i = 0; i < 25; ++i) {
    gv[i] = dist(rng);
    av[i] = gv[i] + 0.3 * dist(rng);
    bv[i] = dist(rng);
  }
  ScoreSeries g = series("gold", gv), a = series("a", av), b = series("b", bv);
  // 512 resamples keep every p-value dyadic, so the checks below are exact.
  SignificanceResult r1 = paired_bootstrap(a, b, g, CorrelationMetric::spearman, 512, 1234);
  SignificanceResult r2 = paired_bootstrap(a, b, g, CorrelationMetric::spearman, 512, 1234);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.n_redrawn == r2.n_redrawn);

  // Exchanging the methods complements the p-value exactly.
  SignificanceResult swapped = paired_bootstrap(b, a, g, CorrelationMetric::spearman, 512, 1234);
  CHECK(r1.p_value + swapped.p_value == 1.0);
  CHECK(swapped.observed_delta == -r1.observed_delta);
}

TEST_CASE("bootstrap: undefined resamples are redrawn and counted") {
  // Tiny series with repeated gold values make constant resamples likely.
  ScoreSeries g = series("gold", {1.0, 1.0, 2.0});
  ScoreSeries a = series("a", {1.0, 2.0, 3.0});
  ScoreSeries b = series("b", {3.0, 2.0, 1.0});
  SignificanceResult r = paired_bootstrap(a, b, g, CorrelationMetric::pearson, 500, 7);
  CHECK(r.n_redrawn > 0);
  CHECK(r.resamples == 500);
}

TEST_CASE("bootstrap: degenerate observed correlation is an error") {
  ScoreSeries g = series("gold", {2.0, 2.0, 2.0});
  ScoreSeries a = series("a", {1.0, 2.0, 3.0});
  ScoreSeries b = series("b", {3.0, 2.0, 1.0});
  CHECK_THROWS_AS(paired_bootstrap(a, b, g, CorrelationMetric::pearson, 10, 1),
                  UndefinedStatError);
}

TEST_CASE("bootstrap: series must align by id") {
  ScoreSeries g = series("gold", {1, 2, 3});
  ScoreSeries a = series("a", {1, 2, 3});
  ScoreSeries b = series("b", {3, 2, 1});
  b.ids[2] = "item99";
  CHECK_THROWS_AS(paired_bootstrap(a, b, g, CorrelationMetric::kendall, 10, 1), ValidationError);

  ScoreSeries dup = series("dup", {1, 2, 3});
  dup.ids[1] = dup.ids[0];
  CHECK_THROWS_AS(paired_bootstrap(dup, b, g, CorrelationMetric::kendall, 10, 1),
                  ValidationError);
}

TEST_CASE("bootstrap: alignment is by id, not by position") {
  ScoreSeries g = series("gold", {1, 2, 3, 4});
  // Same mapping as gold but permuted storage order: correlation must be 1.
  ScoreSeries a;
  a.method = "permuted";
  a.ids = {"item3", "item0", "item2", "item1"};
  a.values = {4, 1, 3, 2};
  ScoreSeries b = series("anti", {4, 3, 2, 1});
  SignificanceResult r = paired_bootstrap(a, b, g, CorrelationMetric::kendall, 50, 3);
  CHECK(r.observed_a == 1.0);
  CHECK(r.observed_b == -1.0);
}

TEST_CASE("one-sample bootstrap against zero correlation") {
  std::vector<double> gv;
  for (int i = 0; i < 20; ++i) gv.push_back(static_cast<double>(i * i));
  ScoreSeries g = series("gold", gv);
  ScoreSeries a = series("same", gv);
  SignificanceResult pos = bootstrap_vs_zero(a, g, CorrelationMetric::kendall, 300, 5);
  CHECK(pos.p_value == 0.0);

  std::vector<double> anti(gv.size());
  for (std::size_t i = 0; i < gv.size(); ++i) anti[i] = -gv[i];
  ScoreSeries b = series("anti", anti);
  SignificanceResult neg = bootstrap_vs_zero(b, g, CorrelationMetric::kendall, 300, 5);
  CHECK(neg.p_value == 1.0);
}

TEST_CASE("agreement rate treats Tie as its own class") {
  std::vector<PairwiseChoice> chosen = {PairwiseChoice::A, PairwiseChoice::B, PairwiseChoice::Tie,
                                        PairwiseChoice::Tie};
  std::vector<PairwiseChoice> gold = {PairwiseChoice::A, PairwiseChoice::Tie, PairwiseChoice::Tie,
                                      PairwiseChoice::B};
  CHECK(agreement_rate(chosen, gold) == 0.5);
  CHECK_THROWS_AS(agreement_rate({}, {}), ValidationError);
}

TEST_CASE("win rate table") {
  std::vector<RefinementOutcome> outcomes = {RefinementOutcome::win, RefinementOutcome::win,
                                             RefinementOutcome::tie, RefinementOutcome::loss};
  WinRateTable t = win_rate_table(outcomes);
  CHECK(t.n == 4);
  CHECK(t.wins == 2);
  CHECK(t.win_pct == 50.0);
  CHECK(t.tie_pct == 25.0);
  CHECK(t.loss_pct == 25.0);
}

namespace {

ScoreReport simple_report(double p, double r) {
  ScoreReport rep;
  rep.level = AggregationLevel::per_critique;
  rep.precision = p;
  rep.recall = r;
  rep.n_hypo_aius = 100;
  rep.n_factual = static_cast<std::int64_t>(p * 100);
  rep.n_ref_aius = 100;
  rep.n_entailed = static_cast<std::int64_t>(r * 100);
  rep.f1 = f1_score(p, r);
  return rep;
}

}  // namespace

TEST_CASE("leaderboard ranks by macro f1 with stated tie-breaks") {
  std::map<std::string, std::vector<ScoreReport>> models;
  models["alpha"] = {simple_report(0.9, 0.5)};
  models["beta"] = {simple_report(0.6, 0.6)};
  // gamma ties beta on f1 (same single report f1) but higher precision.
  models["gamma"] = {simple_report(0.6, 0.6)};
  models["gamma"][0].precision = 0.7;
  models["gamma"][0].f1 = models["beta"][0].f1;

  auto rows = leaderboard(models);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].model == "alpha");
  CHECK(rows[1].model == "gamma");  // precision tie-break
  CHECK(rows[2].model == "beta");

  std::string table = render_leaderboard(rows);
  CHECK(table.find("Model") != std::string::npos);
  // Column order: precision, recall, f1.
  std::size_t p_at = table.find("Precision");
  std::size_t r_at = table.find("Recall");
  std::size_t f_at = table.find("F1");
  REQUIRE(p_at != std::string::npos);
  CHECK(p_at < r_at);
  CHECK(r_at < f_at);
}

TEST_CASE("leaderboard equal rows fall back to name order") {
  std::map<std::string, std::vector<ScoreReport>> models;
  models["zeta"] = {simple_report(0.5, 0.5)};
  models["eta"] = {simple_report(0.5, 0.5)};
  auto rows = leaderboard(models);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].model == "eta");
  CHECK(rows[1].model == "zeta");
}
