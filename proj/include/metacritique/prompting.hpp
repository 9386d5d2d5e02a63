#pragma once

#include <map>
#include <string>
#include <vector>

#include "metacritique/gateway.hpp"
#include "metacritique/types.hpp"

namespace metacritique {

enum class TemplateId {
  reference_critique,
  hypothesis_critique,
  aiu_extraction,
  precision_task,
  recall_task,
  pairwise_rating,
  single_rating,
  refine_answer,
  eval_refined_pair,
};

const char* to_string(TemplateId id);
TemplateId template_id_from_string(const std::string& s);
std::vector<TemplateId> all_template_ids();

// A prompt template: fixed system/user text with {placeholder} slots. The
// texts ship as data files and are also compiled in; both routes carry
// byte-identical content, checksummed in data/prompts/manifest.json.
struct PromptTemplate {
  TemplateId id = TemplateId::reference_critique;
  std::string system_text;  // empty for single-block templates
  std::string user_text;
  std::vector<std::string> placeholders;  // declared slot names, in first-use order
  std::string checksum;                   // sha256 of the source file bytes
};

class TemplateLibrary {
 public:
  // Compiled-in copies of the data files.
  static TemplateLibrary builtin();

  // Loads *.txt from a directory and verifies each against manifest.json in
  // the same directory. A checksum mismatch or a missing template throws
  // TemplateError.
  static TemplateLibrary load(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;
  std::map<std::string, std::string> checksums() const;  // template name -> sha256

  // Fills every placeholder and returns the request to send. Throws
  // TemplateError when a placeholder has no binding, a binding names no
  // placeholder, or the id is unknown. Substitution is a single pass:
  // brace sequences inside bound values are left untouched.
  CompletionRequest render(TemplateId id, const std::map<std::string, std::string>& bindings,
                           const std::string& model, double temperature = 0.0,
                           int max_tokens = 1024) const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

// Splits a claim-extraction completion into ordered claim texts: one per
// line, bullets / numbering / surrounding whitespace stripped, empty lines
// dropped. Zero claims -> EmptyExtractionError.
std::vector<std::string> parse_aiu_list(const std::string& completion);

struct Verdict {
  bool label = false;        // true <=> "the claim is true"
  std::string rationale;     // the full completion text
};

// Finds the last case-insensitive "the claim is true"/"the claim is false" in
// the completion. None -> UnparseableVerdictError.
Verdict parse_verdict(const std::string& completion);

// Finds the last [[A]] / [[B]] / [[C]] token; C means Tie. None ->
// UnparseableVerdictError.
PairwiseChoice parse_pairwise_verdict(const std::string& completion);

// Finds the last [[n]] with integer n, then checks 1 <= n <= 7. Out of range
// -> OutOfRangeScoreError; no token at all -> UnparseableVerdictError.
int parse_likert(const std::string& completion);

}  // namespace metacritique
