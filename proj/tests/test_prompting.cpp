#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "metacritique/errors.hpp"
#include "metacritique/prompting.hpp"

using namespace metacritique;
namespace fs = std::filesystem;

TEST_CASE("builtin templates match the data files byte for byte") {
  TemplateLibrary from_files = TemplateLibrary::load(PROMPT_DATA_DIR);
  TemplateLibrary compiled = TemplateLibrary::builtin();

  auto file_sums = from_files.checksums();
  auto builtin_sums = compiled.checksums();
  REQUIRE(file_sums.size() == 9);
  CHECK(file_sums == builtin_sums);

  for (TemplateId id : all_template_ids()) {
    const PromptTemplate& a = from_files.get(id);
    const PromptTemplate& b = compiled.get(id);
    CAPTURE(to_string(id));
    CHECK(a.system_text == b.system_text);
    CHECK(a.user_text == b.user_text);
    CHECK(a.placeholders == b.placeholders);
  }
}

TEST_CASE("template ids round-trip through their names") {
  for (TemplateId id : all_template_ids()) {
    CHECK(template_id_from_string(to_string(id)) == id);
  }
  CHECK_THROWS_AS(template_id_from_string("no_such_template"), TemplateError);
}

TEST_CASE("load rejects tampered or incomplete template directories") {
  fs::path dir = fs::path("prompt_load_test");
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(PROMPT_DATA_DIR)) {
    fs::copy_file(entry.path(), dir / entry.path().filename());
  }
  CHECK_NOTHROW(TemplateLibrary::load(dir));

  {
    std::ofstream out(dir / "aiu_extraction.txt", std::ios::app);
    out << " ";
  }
  CHECK_THROWS_AS(TemplateLibrary::load(dir), TemplateError);

  fs::remove(dir / "manifest.json");
  CHECK_THROWS_AS(TemplateLibrary::load(dir), TemplateError);
  fs::remove_all(dir);
}

TEST_CASE("templates carry the expected slots and framing") {
  TemplateLibrary lib = TemplateLibrary::builtin();

  const PromptTemplate& precision = lib.get(TemplateId::precision_task);
  CHECK(precision.placeholders ==
        std::vector<std::string>{"question", "model-generated answer", "reference answer",
                                 "AIU from hypothesis critique"});
  CHECK(precision.system_text.find("the input question is the most reliable") !=
        std::string::npos);
  CHECK(precision.user_text.substr(precision.user_text.size() - 14) == "<verify claim>");

  const PromptTemplate& recall = lib.get(TemplateId::recall_task);
  CHECK(recall.placeholders ==
        std::vector<std::string>{"hypothesis critique", "AIU from reference critique"});
  CHECK(recall.system_text.find(
            "either explicitly mentioned in the reference text or logically deducible") !=
        std::string::npos);

  const PromptTemplate& extraction = lib.get(TemplateId::aiu_extraction);
  CHECK(extraction.placeholders == std::vector<std::string>{"critique"});
  CHECK(extraction.system_text.find("all check-worthy claims") != std::string::npos);
  CHECK(extraction.system_text.find("violates basic principles of common sense that flour "
                                    "is not sweet") != std::string::npos);

  // Single-block template: no system half.
  const PromptTemplate& hypo = lib.get(TemplateId::hypothesis_critique);
  CHECK(hypo.system_text.empty());
  CHECK(hypo.user_text.rfind("You are a brilliant AI assistant.", 0) == 0);

  CHECK(lib.get(TemplateId::single_rating).system_text.find("7: When the answer is wrong") !=
        std::string::npos);
  CHECK(lib.get(TemplateId::pairwise_rating).system_text.find("\"[[C]]\" for a tie") !=
        std::string::npos);
  CHECK(lib.get(TemplateId::eval_refined_pair)
            .system_text.find("considered redundant") != std::string::npos);
}

TEST_CASE("render fills every slot and keeps message roles") {
  TemplateLibrary lib = TemplateLibrary::builtin();

  CompletionRequest req = lib.render(TemplateId::aiu_extraction,
                                     {{"critique", "The answer is wrong because X."}}, "gpt-4");
  REQUIRE(req.messages.size() == 2);
  CHECK(req.messages[0].role == MessageRole::system);
  CHECK(req.messages[1].role == MessageRole::user);
  CHECK(req.messages[1].content.find("The answer is wrong because X.") != std::string::npos);
  CHECK(req.messages[1].content.rfind("input:", 0) == 0);
  CHECK(req.messages[1].content.substr(req.messages[1].content.size() - 7) == "claims:");
  CHECK(req.model == "gpt-4");
  CHECK(req.temperature == 0.0);
  CHECK(req.max_tokens == 1024);

  CompletionRequest single = lib.render(
      TemplateId::hypothesis_critique,
      {{"question", "Why is the sky blue?"}, {"model-generated answer", "Rayleigh."}}, "m");
  REQUIRE(single.messages.size() == 1);
  CHECK(single.messages[0].role == MessageRole::user);
  CHECK(single.messages[0].content.find("Why is the sky blue?") != std::string::npos);
  CHECK(single.messages[0].content.find("Rayleigh.") != std::string::npos);
}

TEST_CASE("render rejects bad binding sets") {
  TemplateLibrary lib = TemplateLibrary::builtin();
  CHECK_THROWS_AS(lib.render(TemplateId::aiu_extraction, {}, "m"), TemplateError);
  CHECK_THROWS_AS(lib.render(TemplateId::aiu_extraction,
                             {{"critique", "x"}, {"unexpected", "y"}}, "m"),
                  TemplateError);
}

TEST_CASE("substitution is a single pass over the template") {
  TemplateLibrary lib = TemplateLibrary::builtin();
  CompletionRequest req = lib.render(TemplateId::aiu_extraction,
                                     {{"critique", "keep {reference answer} literal"}}, "m");
  CHECK(req.messages[1].content.find("keep {reference answer} literal") != std::string::npos);
}

TEST_CASE("claim list parsing on template-style completions") {
  std::string block =
      "The model-generated answer violates basic principles of common sense that flour is not "
      "sweet.\n"
      "\n"
      "Dusting Flour onto the bread would not sweeten the bread.\n"
      "\n"
      "The correct answer is to dust powdered sugar.\n"
      "\n"
      "Sugar is sweet.";
  std::vector<std::string> claims = parse_aiu_list(block);
  REQUIRE(claims.size() == 4);
  CHECK(claims[0] ==
        "The model-generated answer violates basic principles of common sense that flour is not "
        "sweet.");
  CHECK(claims[3] == "Sugar is sweet.");

  std::string six =
      "The model-generated answer makes a logical error in rejecting the possibility of sunlight "
      "being the right answer.\n\n"
      "Sunlight might be produced in the sun.\n\n"
      "Sunlight doesn't stay in the sun.\n\n"
      "Sunlight comes to earth.\n\n"
      "Sunlight is on earth itself.\n\n"
      "Sunlight, option 2, is the right answer as it is the oldest heat source on Earth.";
  CHECK(parse_aiu_list(six).size() == 6);
}

TEST_CASE("claim list parsing strips bullets and numbering") {
  std::string text =
      "- first claim\n"
      "* second claim\n"
      "\xe2\x80\xa2 third claim\n"
      "1. fourth claim\n"
      "2) fifth claim\n"
      "(3) sixth claim\n"
      "4: seventh claim\n"
      "   eighth claim with padding   \n";
  std::vector<std::string> claims = parse_aiu_list(text);
  REQUIRE(claims.size() == 8);
  CHECK(claims[0] == "first claim");
  CHECK(claims[1] == "second claim");
  CHECK(claims[2] == "third claim");
  CHECK(claims[3] == "fourth claim");
  CHECK(claims[4] == "fifth claim");
  CHECK(claims[5] == "sixth claim");
  CHECK(claims[6] == "seventh claim");
  CHECK(claims[7] == "eighth claim with padding");
}

TEST_CASE("claim list parsing keeps numbers that are content") {
  std::vector<std::string> claims = parse_aiu_list("1.5 million people attended.\n2023 was dry.");
  REQUIRE(claims.size() == 2);
  CHECK(claims[0] == "1.5 million people attended.");
  CHECK(claims[1] == "2023 was dry.");
}

TEST_CASE("claim list parsing rejects empty extractions") {
  CHECK_THROWS_AS(parse_aiu_list(""), EmptyExtractionError);
  CHECK_THROWS_AS(parse_aiu_list("   \n\n \t \n"), EmptyExtractionError);
}

TEST_CASE("verdict parsing follows the template's closing sentence") {
  std::string affirm =
      "To verify the claim, we need to consider the model-generated answer and the reference "
      "answer.\n"
      "The reference answer says that Option 2 is the correct choice.\n"
      "The claim is consistent with the above analysis result. Therefore, the claim is true.";
  Verdict v = parse_verdict(affirm);
  CHECK(v.label == true);
  CHECK(v.rationale == affirm);

  std::string deny =
      "The claim states that William Curtis wants to increase opening hours. The claim "
      "contradicts with the above reasoning result. Therefore, the claim is false.";
  CHECK(parse_verdict(deny).label == false);
}

TEST_CASE("verdict parsing takes the last statement and ignores case") {
  CHECK(parse_verdict("The claim is true. On reflection, the claim is false.").label == false);
  CHECK(parse_verdict("the claim is false... actually, The Claim Is True").label == true);
  CHECK(parse_verdict("THE CLAIM IS TRUE").label == true);
  CHECK_THROWS_AS(parse_verdict("The claim seems plausible."), UnparseableVerdictError);
}

TEST_CASE("pairwise verdict parsing") {
  CHECK(parse_pairwise_verdict("Critique A is sharper. [[A]]") == PairwiseChoice::A);
  CHECK(parse_pairwise_verdict("[[B]]") == PairwiseChoice::B);
  CHECK(parse_pairwise_verdict("Both have merit. [[C]]") == PairwiseChoice::Tie);
  CHECK(parse_pairwise_verdict("verdict: [[c]]") == PairwiseChoice::Tie);
  // A completion that first echoes the instructions, then decides.
  std::string echoed =
      "I will answer \"[[A]]\" if the critique A is better, \"[[B]]\" if the critique B is "
      "better, and \"[[C]]\" for a tie.\nAfter comparing both: [[B]]";
  CHECK(parse_pairwise_verdict(echoed) == PairwiseChoice::B);
  CHECK_THROWS_AS(parse_pairwise_verdict("no verdict here"), UnparseableVerdictError);
  CHECK_THROWS_AS(parse_pairwise_verdict("[[D]] [[AB]]"), UnparseableVerdictError);
}

TEST_CASE("likert parsing enforces the 1..7 scale") {
  CHECK(parse_likert("Reasonable critique. [[5]]") == 5);
  CHECK(parse_likert("[[1]]") == 1);
  CHECK(parse_likert("[[7]]") == 7);
  CHECK(parse_likert("First thought [[3]], but revised: [[6]]") == 6);
  CHECK_THROWS_AS(parse_likert("[[9]]"), OutOfRangeScoreError);
  CHECK_THROWS_AS(parse_likert("[[0]]"), OutOfRangeScoreError);
  CHECK_THROWS_AS(parse_likert("score 5"), UnparseableVerdictError);
  // The literal format string from the instructions carries no digits.
  CHECK_THROWS_AS(parse_likert("\"[[score]]\""), UnparseableVerdictError);
}
