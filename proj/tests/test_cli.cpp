// End-to-end tests of the command line binary (CLI_BIN), driven through the
// shell. Everything runs against the scripted backend, so the assertions are
// exact and hermetic.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "metacritique/util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string fixture(const std::string& name) {
  return (fs::path(TEST_FIXTURE_DIR) / name).string();
}

fs::path scratch_root() { return fs::temp_directory_path() / "metacritique_cli_scratch"; }

fs::path fresh_dir(const std::string& name) {
  fs::path dir = scratch_root() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) { return metacritique::read_file(path); }

CliResult run_cli(const std::string& args) {
  static int invocation = 0;
  fs::path dir = scratch_root() / ("io_" + std::to_string(invocation++));
  fs::create_directories(dir);
  fs::path out_file = dir / "out.txt";
  fs::path err_file = dir / "err.txt";
  std::string cmd = std::string("\"") + CLI_BIN + "\" " + args + " > \"" + out_file.string() +
                    "\" 2> \"" + err_file.string() + "\"";
  int status = std::system(cmd.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out_file);
  result.err = slurp(err_file);
  return result;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> rows;
  std::istringstream in(slurp(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

std::string score_args(const fs::path& out_dir) {
  return "--dataset " + fixture("batch_dataset.jsonl") + " --backend scripted --fixtures " +
         fixture("batch_fixtures.json") + " --out " + out_dir.string();
}

}  // namespace

TEST_CASE("validate accepts a clean dataset") {
  CliResult r = run_cli("validate --dataset " + fixture("batch_dataset.jsonl"));
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("3 record(s), 0 issue(s)") != std::string::npos);
}

TEST_CASE("validate lists line-numbered issues and exits nonzero") {
  std::string path = fixture("malformed_dataset.jsonl");
  CliResult r = run_cli("validate --dataset " + path);
  CHECK(r.exit_code == 1);
  CHECK(r.out.find(path + ":2:") != std::string::npos);
  CHECK(r.out.find(path + ":3:") != std::string::npos);
  CHECK(r.out.find("2 record(s), 2 issue(s)") != std::string::npos);
}

TEST_CASE("unknown flags exit nonzero and name the offender") {
  fs::path out_dir = fresh_dir("unknown_flag");
  CliResult r = run_cli("score " + score_args(out_dir) + " --definitely-not-a-flag");
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("--definitely-not-a-flag") != std::string::npos);
  CHECK(r.err.find("--help") != std::string::npos);
  // The parse error must abort before any pipeline work.
  CHECK_FALSE(fs::exists(out_dir / "scores.jsonl"));

  CliResult bare = run_cli("");
  CHECK(bare.exit_code != 0);

  CliResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("score") != std::string::npos);
  CHECK(help.out.find("meta-eval") != std::string::npos);
  CHECK(help.out.find("validate") != std::string::npos);
}

TEST_CASE("score runs hermetically, deterministically, and only inside --out") {
  fs::path parent = fresh_dir("score_parent");
  fs::path out_dir = parent / "out";

  CliResult first = run_cli("score " + score_args(out_dir));
  REQUIRE(first.exit_code == 0);
  CHECK(first.out.find("scored 3 critique(s), skipped 0") != std::string::npos);
  CHECK(first.out.find("micro") != std::string::npos);

  // Everything the run produced lives below --out.
  std::set<std::string> children;
  for (const auto& entry : fs::directory_iterator(parent)) {
    children.insert(entry.path().filename().string());
  }
  CHECK(children == std::set<std::string>{"out"});
  CHECK_FALSE(fs::exists(out_dir / ".lock"));  // released on exit

  std::vector<json> rows = read_jsonl(out_dir / "scores.jsonl");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["record_id"] == "rec1");
  CHECK(rows[0]["critique_id"] == "hypo-1");
  CHECK(rows[0]["model"] == "model-x");
  CHECK(rows[0]["precision"].get<double>() == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(rows[0]["recall"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rows[0]["f1"].get<double>() == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
  CHECK(rows[1]["record_id"] == "rec2");
  CHECK(rows[1]["f1"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rows[2]["record_id"] == "rec3");
  CHECK(rows[2]["f1"].get<double>() == 0.0);
  CHECK(rows[2]["precision"].get<double>() == 0.0);
  CHECK(rows[2]["recall"].get<double>() == 0.0);

  json summary = json::parse(slurp(out_dir / "summary.json"));
  CHECK(summary["n_critiques"] == 3);
  CHECK(summary["critiques_scored"] == 3);
  CHECK(summary["micro"]["f1"].get<double>() == doctest::Approx(12.0 / 19.0).epsilon(1e-12));
  CHECK(summary["macro"]["f1"].get<double>() == doctest::Approx(11.0 / 21.0).epsilon(1e-12));
  CHECK(summary["diagnostics"]["parse_retries"] == 0);
  CHECK(summary["diagnostics"]["flagged_judgments"] == 0);

  json manifest = json::parse(slurp(out_dir / "run_manifest.json"));
  CHECK(manifest["backend"] == "scripted");
  CHECK(manifest["judge_model"] == "gpt-4");
  CHECK(manifest["dataset_sha256"].get<std::string>().size() == 64);
  CHECK(manifest["run_id"].get<std::string>().size() == 16);
  CHECK(manifest["template_checksums"].size() == 9);

  // A rerun over the same directory resumes from the persisted reports and
  // reproduces the scores byte for byte.
  std::string scores_before = slurp(out_dir / "scores.jsonl");
  CliResult second = run_cli("score " + score_args(out_dir));
  REQUIRE(second.exit_code == 0);
  CHECK(second.out.find("scored 0 critique(s), skipped 3") != std::string::npos);
  CHECK(slurp(out_dir / "scores.jsonl") == scores_before);
}

TEST_CASE("the staged subcommands share one output directory") {
  fs::path out_dir = fresh_dir("staged");

  CliResult refs = run_cli("gen-refs " + score_args(out_dir));
  REQUIRE(refs.exit_code == 0);
  CHECK(refs.out.find("reference generation done for 3 of 3 record(s)") != std::string::npos);
  CHECK(fs::exists(out_dir / "answers" / "rec1.json"));
  CHECK(fs::exists(out_dir / "critiques" / "rec3.json"));

  CliResult aius = run_cli("extract-aius " + score_args(out_dir));
  REQUIRE(aius.exit_code == 0);
  CHECK(aius.out.find("AIU extraction done for 3 of 3 record(s)") != std::string::npos);
  CHECK(fs::exists(out_dir / "aius" / "rec1__hypo-1.json"));
  CHECK(fs::exists(out_dir / "aius" / "rec1__reference.json"));

  CliResult judged = run_cli("judge " + score_args(out_dir));
  REQUIRE(judged.exit_code == 0);
  CHECK(judged.out.find("scored 3 critique(s), skipped 0") != std::string::npos);
  CHECK(fs::exists(out_dir / "judgments" / "rec1__hypo-1.json"));
  CHECK(fs::exists(out_dir / "reports" / "rec1__hypo-1.json"));
  CHECK_FALSE(fs::exists(out_dir / "scores.jsonl"));

  // score picks up the persisted reports without re-judging anything.
  CliResult scored = run_cli("score " + score_args(out_dir));
  REQUIRE(scored.exit_code == 0);
  CHECK(scored.out.find("scored 0 critique(s), skipped 3") != std::string::npos);
  std::vector<json> rows = read_jsonl(out_dir / "scores.jsonl");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["f1"].get<double>() == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("score --from-judgments uses labels on the dataset without a backend") {
  fs::path out_dir = fresh_dir("gold_scores");
  CliResult r = run_cli("score --dataset " + fixture("gold_dataset.jsonl") +
                        " --from-judgments human-gold --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("scored 2 critique(s) from 'human-gold' judgments") != std::string::npos);

  std::vector<json> rows = read_jsonl(out_dir / "scores.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["record_id"] == "g1");
  CHECK(rows[0]["precision"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rows[0]["recall"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rows[1]["record_id"] == "g2");
  CHECK(rows[1]["f1"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  // No backend artifacts appear on this path.
  CHECK_FALSE(fs::exists(out_dir / "judgments"));
  CHECK_FALSE(fs::exists(out_dir / "cache"));
}

TEST_CASE("meta-eval compares two methods against gold") {
  fs::path out_dir = fresh_dir("meta_two");
  CliResult r = run_cli("meta-eval --gold " + fixture("scores_gold.jsonl") + " --method " +
                        fixture("scores_method_a.jsonl") + " --method-b " +
                        fixture("scores_method_b.jsonl") +
                        " --metric spearman --resamples 512 --seed 7 --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("metric: spearman on 'f1', 8 item(s)") != std::string::npos);
  CHECK(r.out.find("spearman(scores_method_a, gold) = 1.0000") != std::string::npos);
  CHECK(r.out.find("spearman(scores_method_b, gold) = -1.0000") != std::string::npos);
  CHECK(r.out.find("delta = 2.0000") != std::string::npos);
  CHECK(r.out.find("p = 0.0000 (512 resamples, seed 7,") != std::string::npos);

  json persisted = json::parse(slurp(out_dir / "meta_eval.json"));
  CHECK(persisted["metric"] == "spearman");
  CHECK(persisted["items"] == 8);
  CHECK(persisted["p_value"].get<double>() == 0.0);
}

TEST_CASE("meta-eval falls back to the one-sample test for a single method") {
  CliResult r = run_cli("meta-eval --gold " + fixture("scores_gold.jsonl") + " --method " +
                        fixture("scores_method_b.jsonl") +
                        " --metric kendall --resamples 512 --seed 7");
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("kendall(scores_method_b, gold) = -1.0000") != std::string::npos);
  // An anti-correlated method never beats zero, so p sits at 1.
  CHECK(r.out.find("p = 1.0000") != std::string::npos);
  CHECK(r.out.find("delta") == std::string::npos);
}

TEST_CASE("pairwise judges fixture pairs and reports gold agreement") {
  fs::path out_dir = fresh_dir("pairwise");
  CliResult r = run_cli("pairwise --dataset " + fixture("pairwise_dataset.jsonl") + " --pairs " +
                        fixture("pairs.jsonl") + " --backend scripted --fixtures " +
                        fixture("pairwise_fixtures.json") + " --gold " +
                        fixture("pairwise_gold.jsonl") + " --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("1 pair(s): A 1, B 0, Tie 0") != std::string::npos);
  CHECK(r.out.find("agreement with gold: 100.00% over 1 pair(s)") != std::string::npos);

  std::vector<json> rows = read_jsonl(out_dir / "pairwise.jsonl");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["record_id"] == "pw1");
  CHECK(rows[0]["chosen"] == "A");
  CHECK(rows[0]["method"] == "pairwise:gpt-4");
}

TEST_CASE("refine improves the answer under each critique and compares the results") {
  fs::path out_dir = fresh_dir("refine");
  CliResult r = run_cli("refine --dataset " + fixture("pairwise_dataset.jsonl") + " --pairs " +
                        fixture("pairs.jsonl") + " --backend scripted --fixtures " +
                        fixture("pairwise_fixtures.json") + " --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("1 pair(s): win 100.00% (1), tie 0.00% (0), loss 0.00% (0)") !=
        std::string::npos);

  std::vector<json> rows = read_jsonl(out_dir / "refine.jsonl");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0]["refined_a"] == "Canberra is the capital of Australia.");
  CHECK(rows[0]["refined_b"] == "Sydney is the largest city, but the capital is Canberra.");
  CHECK(rows[0]["choice"] == "A");
  CHECK(rows[0]["outcome"] == "win");
}

TEST_CASE("single rates every hypothesis critique on the fixture scale") {
  fs::path out_dir = fresh_dir("single");
  CliResult r = run_cli("single --dataset " + fixture("pairwise_dataset.jsonl") +
                        " --backend scripted --fixtures " + fixture("pairwise_fixtures.json") +
                        " --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("model-alpha: mean rating 6.00 over 1 critique(s)") != std::string::npos);
  CHECK(r.out.find("model-beta: mean rating 2.00 over 1 critique(s)") != std::string::npos);

  std::vector<json> rows = read_jsonl(out_dir / "ratings.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["critique_id"] == "alpha");
  CHECK(rows[0]["rating"] == 6);
  CHECK(rows[1]["critique_id"] == "beta");
  CHECK(rows[1]["rating"] == 2);
}

TEST_CASE("leaderboard ranks models by macro f1") {
  fs::path score_dir = fresh_dir("board_scores");
  REQUIRE(run_cli("score " + score_args(score_dir)).exit_code == 0);

  fs::path out_dir = fresh_dir("board_out");
  CliResult r = run_cli("leaderboard --scores " + (score_dir / "scores.jsonl").string() +
                        " --out " + out_dir.string());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("Model") != std::string::npos);
  CHECK(r.out.find("Precision") != std::string::npos);
  CHECK(r.out.find("Recall") != std::string::npos);
  CHECK(r.out.find("F1") != std::string::npos);
  // model-x: macro f1 of {4/7, 1} = 11/14 -> 78.57. model-y scored zero.
  CHECK(r.out.find("78.57") != std::string::npos);
  std::size_t pos_x = r.out.find("model-x");
  std::size_t pos_y = r.out.find("model-y");
  REQUIRE(pos_x != std::string::npos);
  REQUIRE(pos_y != std::string::npos);
  CHECK(pos_x < pos_y);

  std::vector<json> rows = read_jsonl(out_dir / "leaderboard.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0]["rank"] == 1);
  CHECK(rows[0]["model"] == "model-x");
  CHECK(rows[0]["n_critiques"] == 2);
  CHECK(rows[0]["f1"].get<double>() == doctest::Approx(11.0 / 14.0).epsilon(1e-12));
  CHECK(rows[1]["model"] == "model-y");
}

TEST_CASE("a held lock stops a second driver on the same directory") {
  fs::path out_dir = fresh_dir("locked");
  metacritique::write_file_atomic(out_dir / ".lock", "12345\n");
  CliResult r = run_cli("score " + score_args(out_dir));
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("lock") != std::string::npos);
  CHECK_FALSE(fs::exists(out_dir / "scores.jsonl"));
  // The stale lock file is left for the operator to clear, not auto-removed.
  CHECK(fs::exists(out_dir / ".lock"));
}
