// Python bindings for the main operations: parsers, scoring arithmetic,
// meta-evaluation statistics, and a hermetic end-to-end scoring run against
// the scripted backend. Rows cross the boundary as flat dicts shaped like the
// scores.jsonl lines the CLI writes.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metacritique/errors.hpp"
#include "metacritique/gateway.hpp"
#include "metacritique/pipeline.hpp"
#include "metacritique/prompting.hpp"
#include "metacritique/scoring.hpp"
#include "metacritique/stats.hpp"
#include "metacritique/store.hpp"
#include "metacritique/types.hpp"

namespace py = pybind11;
using namespace metacritique;

namespace {

py::dict report_to_dict(const ScoreReport& r) {
  py::dict d;
  d["precision"] = r.precision ? py::cast(*r.precision) : py::object(py::none());
  d["recall"] = r.recall ? py::cast(*r.recall) : py::object(py::none());
  d["f1"] = r.f1;
  d["n_hypo_aius"] = r.n_hypo_aius;
  d["n_factual"] = r.n_factual;
  d["n_ref_aius"] = r.n_ref_aius;
  d["n_entailed"] = r.n_entailed;
  d["n_flagged"] = r.n_flagged;
  d["level"] = to_string(r.level);
  return d;
}

ScoreReport report_from_dict(const py::dict& d) {
  ScoreReport r;
  r.level = AggregationLevel::per_critique;
  if (d.contains("precision") && !d["precision"].is_none()) {
    r.precision = d["precision"].cast<double>();
  }
  if (d.contains("recall") && !d["recall"].is_none()) {
    r.recall = d["recall"].cast<double>();
  }
  if (!d.contains("f1")) throw ValidationError("score row needs an 'f1' entry");
  r.f1 = d["f1"].cast<double>();
  auto count = [&d](const char* key) -> std::int64_t {
    return d.contains(key) ? d[key].cast<std::int64_t>() : 0;
  };
  r.n_hypo_aius = count("n_hypo_aius");
  r.n_factual = count("n_factual");
  r.n_ref_aius = count("n_ref_aius");
  r.n_entailed = count("n_entailed");
  r.n_flagged = count("n_flagged");
  return r;
}

std::vector<ScoreReport> reports_from_rows(const std::vector<py::dict>& rows) {
  std::vector<ScoreReport> reports;
  reports.reserve(rows.size());
  for (const py::dict& row : rows) reports.push_back(report_from_dict(row));
  return reports;
}

py::dict row_to_dict(const ScoredCritique& row) {
  py::dict d = report_to_dict(row.report);
  d["record_id"] = row.record_id;
  d["critique_id"] = row.critique_id;
  d["model"] = row.model;
  return d;
}

py::dict significance_to_dict(const SignificanceResult& r) {
  py::dict d;
  d["method_a"] = r.method_a;
  d["method_b"] = r.method_b;
  d["metric"] = to_string(r.metric);
  d["observed_a"] = r.observed_a;
  d["observed_b"] = r.observed_b;
  d["delta"] = r.observed_delta;
  d["p_value"] = r.p_value;
  d["resamples"] = r.resamples;
  d["seed"] = r.seed;
  d["n_redrawn"] = r.n_redrawn;
  return d;
}

// Parallel, pre-aligned value lists; ids are synthesized from the positions.
ScoreSeries series_from_values(const std::string& name, const std::vector<double>& values) {
  ScoreSeries s;
  s.method = name;
  s.values = values;
  s.ids.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) s.ids.push_back(std::to_string(i));
  return s;
}

std::vector<PairwiseChoice> choices_from_strings(const std::vector<std::string>& raw) {
  std::vector<PairwiseChoice> choices;
  choices.reserve(raw.size());
  for (const std::string& s : raw) choices.push_back(pairwise_choice_from_string(s));
  return choices;
}

py::dict score_dataset(const std::string& dataset, const std::string& fixtures,
                       const std::string& out_dir, const std::string& judge_model,
                       const std::string& generator_model, bool use_reference_answer,
                       int fanout) {
  TemplateLibrary templates = TemplateLibrary::builtin();
  Store store(out_dir, templates.checksums());
  RunLock lock = store.lock();

  BackendConfig bc;
  bc.cache_dir = std::filesystem::path(out_dir) / "cache";
  Gateway gateway(bc, std::make_unique<ScriptedBackend>(FixtureSet::load(fixtures)));

  PipelineConfig pc;
  pc.judge_model = judge_model;
  pc.generator_model = generator_model;
  pc.use_reference_answer = use_reference_answer;
  pc.per_record_fanout = fanout;
  Pipeline pipeline(gateway, templates, pc);

  DatasetLoadResult loaded = load_dataset(dataset);
  if (!loaded.issues.empty()) {
    throw ValidationError(dataset + ": " + std::to_string(loaded.issues.size()) +
                          " malformed line(s); run the validate subcommand for details");
  }

  BatchResult result;
  {
    py::gil_scoped_release release;
    result = pipeline.run_batch(loaded.records, store);
  }

  py::list rows;
  std::vector<ScoreReport> reports;
  reports.reserve(result.rows.size());
  for (const ScoredCritique& row : result.rows) {
    rows.append(row_to_dict(row));
    reports.push_back(row.report);
  }
  py::dict out;
  out["rows"] = rows;
  out["micro"] = report_to_dict(aggregate_micro(reports));
  out["macro"] = report_to_dict(aggregate_macro(reports));
  out["critiques_scored"] = result.critiques_scored;
  out["critiques_skipped"] = result.critiques_skipped;
  out["records_failed"] = result.records_failed;
  out["parse_retries"] = result.diagnostics.parse_retries;
  out["flagged_judgments"] = result.diagnostics.flagged_judgments;
  out["empty_extractions"] = result.diagnostics.empty_extractions;
  return out;
}

py::list score_gold(const std::string& dataset, const std::string& judge) {
  DatasetLoadResult loaded = load_dataset(dataset);
  if (!loaded.issues.empty()) {
    throw ValidationError(dataset + ": " + std::to_string(loaded.issues.size()) +
                          " malformed line(s); run the validate subcommand for details");
  }
  py::list rows;
  for (const ScoredCritique& row : score_from_judgments(loaded.records, judge)) {
    rows.append(row_to_dict(row));
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_metacritique, m) {
  m.doc() = "Critique evaluation: AIU-level precision/recall scoring and meta-evaluation";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());

  m.def("f1_score", &f1_score, py::arg("precision"), py::arg("recall"),
        "Harmonic mean of precision and recall; f1(0, 0) is 0 by definition.");

  m.def("parse_aiu_list", &parse_aiu_list, py::arg("completion"),
        "Split an extraction completion into ordered claim texts.");
  m.def(
      "parse_verdict",
      [](const std::string& completion) {
        Verdict v = parse_verdict(completion);
        return py::make_tuple(v.label, v.rationale);
      },
      py::arg("completion"),
      "Parse a binary verdict completion; returns (label, rationale).");
  m.def(
      "parse_pairwise_verdict",
      [](const std::string& completion) {
        return std::string(to_string(parse_pairwise_verdict(completion)));
      },
      py::arg("completion"), "Parse the last [[A]]/[[B]]/[[C]] token; returns 'A', 'B' or 'Tie'.");
  m.def("parse_likert", &parse_likert, py::arg("completion"),
        "Parse the last bracketed 1-7 rating.");

  m.def(
      "pearson",
      [](const std::vector<double>& x, const std::vector<double>& y) { return pearson(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "kendall_tau",
      [](const std::vector<double>& x, const std::vector<double>& y) { return kendall_tau(x, y); },
      py::arg("x"), py::arg("y"));
  m.def(
      "correlation",
      [](const std::string& metric, const std::vector<double>& x, const std::vector<double>& y) {
        return correlation(correlation_metric_from_string(metric), x, y);
      },
      py::arg("metric"), py::arg("x"), py::arg("y"));
  m.def(
      "average_ranks",
      [](const std::vector<double>& values) { return average_ranks(values); },
      py::arg("values"), "1-based average ranks; ties share the mean rank.");

  m.def(
      "paired_bootstrap",
      [](const std::vector<double>& a, const std::vector<double>& b,
         const std::vector<double>& gold, const std::string& metric, std::int64_t resamples,
         std::uint64_t seed) {
        SignificanceResult r =
            paired_bootstrap(series_from_values("a", a), series_from_values("b", b),
                             series_from_values("gold", gold),
                             correlation_metric_from_string(metric), resamples, seed);
        return significance_to_dict(r);
      },
      py::arg("a"), py::arg("b"), py::arg("gold"), py::arg("metric") = "kendall",
      py::arg("resamples") = 1000, py::arg("seed") = 13,
      "Paired bootstrap of corr(a, gold) > corr(b, gold) over pre-aligned values.");
  m.def(
      "bootstrap_vs_zero",
      [](const std::vector<double>& a, const std::vector<double>& gold, const std::string& metric,
         std::int64_t resamples, std::uint64_t seed) {
        SignificanceResult r =
            bootstrap_vs_zero(series_from_values("a", a), series_from_values("gold", gold),
                              correlation_metric_from_string(metric), resamples, seed);
        return significance_to_dict(r);
      },
      py::arg("a"), py::arg("gold"), py::arg("metric") = "kendall", py::arg("resamples") = 1000,
      py::arg("seed") = 13, "One-sample bootstrap of corr(a, gold) > 0.");

  m.def(
      "agreement_rate",
      [](const std::vector<std::string>& chosen, const std::vector<std::string>& gold) {
        return agreement_rate(choices_from_strings(chosen), choices_from_strings(gold));
      },
      py::arg("chosen"), py::arg("gold"),
      "Exact-match rate between two 'A'/'B'/'Tie' sequences.");
  m.def(
      "win_rate",
      [](const std::vector<std::string>& outcomes) {
        std::vector<RefinementOutcome> parsed;
        parsed.reserve(outcomes.size());
        for (const std::string& s : outcomes) parsed.push_back(refinement_outcome_from_string(s));
        WinRateTable t = win_rate_table(parsed);
        py::dict d;
        d["n"] = t.n;
        d["wins"] = t.wins;
        d["ties"] = t.ties;
        d["losses"] = t.losses;
        d["win_pct"] = t.win_pct;
        d["tie_pct"] = t.tie_pct;
        d["loss_pct"] = t.loss_pct;
        return d;
      },
      py::arg("outcomes"), "Tally 'win'/'tie'/'loss' strings into a rate table.");

  m.def(
      "aggregate",
      [](const std::vector<py::dict>& rows, const std::string& level) {
        std::vector<ScoreReport> reports = reports_from_rows(rows);
        if (level == "micro") return report_to_dict(aggregate_micro(reports));
        if (level == "macro") return report_to_dict(aggregate_macro(reports));
        throw ValidationError("level must be 'micro' or 'macro', got '" + level + "'");
      },
      py::arg("rows"), py::arg("level") = "micro",
      "Aggregate flat per-critique score rows at the micro or macro level.");

  m.def(
      "leaderboard",
      [](const std::vector<py::dict>& rows) {
        std::map<std::string, std::vector<ScoreReport>> per_model;
        for (const py::dict& row : rows) {
          std::string model =
              row.contains("model") ? row["model"].cast<std::string>() : std::string("unknown");
          per_model[model].push_back(report_from_dict(row));
        }
        py::list out;
        int rank = 0;
        for (const LeaderboardRow& row : leaderboard(per_model)) {
          py::dict d = report_to_dict(row.scores);
          d["rank"] = ++rank;
          d["model"] = row.model;
          d["n_critiques"] = row.n_critiques;
          out.append(d);
        }
        return out;
      },
      py::arg("rows"), "Rank models by macro F1 from flat per-critique score rows.");
  m.def(
      "render_leaderboard",
      [](const std::vector<py::dict>& rows) {
        std::map<std::string, std::vector<ScoreReport>> per_model;
        for (const py::dict& row : rows) {
          std::string model =
              row.contains("model") ? row["model"].cast<std::string>() : std::string("unknown");
          per_model[model].push_back(report_from_dict(row));
        }
        std::vector<LeaderboardRow> board = leaderboard(per_model);
        return render_leaderboard(board);
      },
      py::arg("rows"), "Fixed-width leaderboard table with Precision / Recall / F1 columns.");

  m.def(
      "template",
      [](const std::string& name) {
        TemplateLibrary lib = TemplateLibrary::builtin();
        const PromptTemplate& t = lib.get(template_id_from_string(name));
        py::dict d;
        d["name"] = name;
        d["system"] = t.system_text;
        d["user"] = t.user_text;
        d["placeholders"] = t.placeholders;
        d["checksum"] = t.checksum;
        return d;
      },
      py::arg("name"), "One compiled-in prompt template with its checksum.");
  m.def(
      "template_checksums", []() { return TemplateLibrary::builtin().checksums(); },
      "Template name -> sha256 of the shipped prompt file.");

  m.def("score_dataset", &score_dataset, py::arg("dataset"), py::arg("fixtures"),
        py::arg("out_dir"), py::arg("judge_model") = "gpt-4",
        py::arg("generator_model") = "gpt-4", py::arg("use_reference_answer") = true,
        py::arg("fanout") = 4,
        "Run the full scoring pipeline hermetically against a fixture file; returns rows plus "
        "micro/macro aggregates and diagnostics. Artifacts persist under out_dir.");
  m.def("score_gold", &score_gold, py::arg("dataset"), py::arg("judge") = "human-gold",
        "Score critiques from judgments already on the dataset (for example human gold labels).");
}
