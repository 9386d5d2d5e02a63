#include "metacritique/prompting.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "metacritique/errors.hpp"
#include "metacritique/util.hpp"
#include "prompt_texts.gen.hpp"

namespace metacritique {

namespace {

struct TemplateMeta {
  TemplateId id;
  const char* name;
  std::vector<std::string> placeholders;
};

const std::array<TemplateMeta, 9>& template_table() {
  static const std::array<TemplateMeta, 9> table = {{
      {TemplateId::reference_critique,
       "reference_critique",
       {"question", "model-generated answer"}},
      {TemplateId::hypothesis_critique,
       "hypothesis_critique",
       {"question", "model-generated answer"}},
      {TemplateId::aiu_extraction, "aiu_extraction", {"critique"}},
      {TemplateId::precision_task,
       "precision_task",
       {"question", "model-generated answer", "reference answer",
        "AIU from hypothesis critique"}},
      {TemplateId::recall_task,
       "recall_task",
       {"hypothesis critique", "AIU from reference critique"}},
      {TemplateId::pairwise_rating,
       "pairwise_rating",
       {"question", "model-generated answer", "hypothesis critique from LLM 1",
        "hypothesis critique from LLM 2"}},
      {TemplateId::single_rating,
       "single_rating",
       {"question", "model-generated answer", "hypothesis critique from LLM"}},
      {TemplateId::refine_answer,
       "refine_answer",
       {"question", "model-generated answer", "hypothesis critique from LLM"}},
      {TemplateId::eval_refined_pair,
       "eval_refined_pair",
       {"question", "refined answer from the LLM 1 critique",
        "refined answer from the LLM 2 critique"}},
  }};
  return table;
}

const TemplateMeta& meta_for(TemplateId id) {
  for (const auto& m : template_table()) {
    if (m.id == id) return m;
  }
  throw TemplateError("unknown template id");
}

bool is_marker(const std::string& line, const char* label) {
  // Matches the divider lines used in the template files, e.g.
  // --------------SYSTEM MESSAGE-------------
  std::size_t i = 0;
  while (i < line.size() && line[i] == '-') ++i;
  if (i < 5) return false;
  std::size_t j = line.size();
  while (j > i && line[j - 1] == '-') --j;
  if (line.size() - j < 5) return false;
  std::string core = line.substr(i, j - i);
  return core == label;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

std::string join_trimmed(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
  while (from < to && lines[from].empty()) ++from;
  while (to > from && lines[to - 1].empty()) --to;
  std::string out;
  for (std::size_t i = from; i < to; ++i) {
    if (i > from) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

// Splits raw template file content into system/user texts. Files without a
// SYSTEM marker are single-block prompts: everything is the user text.
void split_sections(const std::string& content, std::string& system_text,
                    std::string& user_text) {
  std::vector<std::string> lines = split_lines(content);
  std::size_t system_at = lines.size();
  std::size_t user_at = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (is_marker(lines[i], "SYSTEM MESSAGE") && system_at == lines.size()) system_at = i;
    if (is_marker(lines[i], "USER MESSAGE") && user_at == lines.size()) user_at = i;
  }
  if (system_at == lines.size() && user_at == lines.size()) {
    system_text.clear();
    user_text = join_trimmed(lines, 0, lines.size());
    return;
  }
  if (system_at == lines.size() || user_at == lines.size() || user_at < system_at) {
    throw TemplateError("template file has unbalanced section markers");
  }
  system_text = join_trimmed(lines, system_at + 1, user_at);
  user_text = join_trimmed(lines, user_at + 1, lines.size());
}

// Collects the distinct {slot} names appearing in the text.
std::set<std::string> scan_placeholders(const std::string& text) {
  std::set<std::string> found;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    std::size_t end = text.find('}', pos + 1);
    if (end == std::string::npos) break;
    found.insert(text.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return found;
}

PromptTemplate build_template(const TemplateMeta& meta, const std::string& content) {
  PromptTemplate t;
  t.id = meta.id;
  t.placeholders = meta.placeholders;
  t.checksum = sha256_hex(content);
  split_sections(content, t.system_text, t.user_text);

  std::set<std::string> scanned = scan_placeholders(t.system_text);
  std::set<std::string> user_scanned = scan_placeholders(t.user_text);
  scanned.insert(user_scanned.begin(), user_scanned.end());
  std::set<std::string> declared(meta.placeholders.begin(), meta.placeholders.end());
  if (scanned != declared) {
    throw TemplateError(std::string("template '") + meta.name +
                        "' placeholders do not match its declared slots");
  }
  return t;
}

// Single pass: each {slot} is replaced by its binding; replaced text is
// emitted directly and never rescanned.
std::string substitute(const std::string& text,
                       const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t open = text.find('{', pos);
    if (open == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    std::size_t close = text.find('}', open + 1);
    if (close == std::string::npos) {
      out.append(text, pos, std::string::npos);
      break;
    }
    out.append(text, pos, open - pos);
    std::string name = text.substr(open + 1, close - open - 1);
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw TemplateError("no binding for placeholder '" + name + "'");
    }
    out += it->second;
    pos = close + 1;
  }
  return out;
}

}  // namespace

const char* to_string(TemplateId id) { return meta_for(id).name; }

TemplateId template_id_from_string(const std::string& s) {
  for (const auto& m : template_table()) {
    if (s == m.name) return m.id;
  }
  throw TemplateError("unknown template id: '" + s + "'");
}

std::vector<TemplateId> all_template_ids() {
  std::vector<TemplateId> ids;
  for (const auto& m : template_table()) ids.push_back(m.id);
  return ids;
}

TemplateLibrary TemplateLibrary::builtin() {
  TemplateLibrary lib;
  for (const auto& m : template_table()) {
    const char* text = nullptr;
    for (const auto& p : embedded::kPrompts) {
      if (std::string(p.name) == m.name) {
        text = p.text;
        break;
      }
    }
    if (text == nullptr) throw TemplateError(std::string("no embedded text for ") + m.name);
    lib.templates_.emplace(m.id, build_template(m, text));
  }
  return lib;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  std::string manifest_text;
  try {
    manifest_text = read_file(dir / "manifest.json");
  } catch (const StoreError& e) {
    throw TemplateError(std::string("cannot read template manifest: ") + e.what());
  }
  nlohmann::json manifest = nlohmann::json::parse(manifest_text, nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("sha256")) {
    throw TemplateError("template manifest is not valid JSON with a sha256 map");
  }
  const auto& sums = manifest["sha256"];

  TemplateLibrary lib;
  for (const auto& m : template_table()) {
    std::string filename = std::string(m.name) + ".txt";
    std::string content;
    try {
      content = read_file(dir / filename);
    } catch (const StoreError& e) {
      throw TemplateError(std::string("cannot read template file: ") + e.what());
    }
    if (!sums.contains(filename)) {
      throw TemplateError("manifest has no checksum for " + filename);
    }
    std::string expected = sums[filename].get<std::string>();
    std::string actual = sha256_hex(content);
    if (actual != expected) {
      throw TemplateError("checksum mismatch for " + filename + ": manifest " + expected +
                          ", file " + actual);
    }
    lib.templates_.emplace(m.id, build_template(m, content));
  }
  return lib;
}

const PromptTemplate& TemplateLibrary::get(TemplateId id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw TemplateError("template library has no such template");
  return it->second;
}

std::map<std::string, std::string> TemplateLibrary::checksums() const {
  std::map<std::string, std::string> out;
  for (const auto& [id, t] : templates_) {
    out[to_string(id)] = t.checksum;
  }
  return out;
}

CompletionRequest TemplateLibrary::render(TemplateId id,
                                          const std::map<std::string, std::string>& bindings,
                                          const std::string& model, double temperature,
                                          int max_tokens) const {
  const PromptTemplate& t = get(id);

  std::set<std::string> declared(t.placeholders.begin(), t.placeholders.end());
  for (const auto& [key, value] : bindings) {
    if (declared.find(key) == declared.end()) {
      throw TemplateError("binding '" + key + "' names no placeholder of template '" +
                          std::string(to_string(id)) + "'");
    }
  }
  for (const auto& name : t.placeholders) {
    if (bindings.find(name) == bindings.end()) {
      throw TemplateError("missing binding '" + name + "' for template '" +
                          std::string(to_string(id)) + "'");
    }
  }

  CompletionRequest request;
  request.model = model;
  request.temperature = temperature;
  request.max_tokens = max_tokens;
  if (!t.system_text.empty()) {
    request.messages.push_back({MessageRole::system, substitute(t.system_text, bindings)});
  }
  request.messages.push_back({MessageRole::user, substitute(t.user_text, bindings)});
  return request;
}

std::vector<std::string> parse_aiu_list(const std::string& completion) {
  std::vector<std::string> claims;
  for (const std::string& raw : split_lines(completion)) {
    std::string line = raw;
    auto trim = [](std::string& s) {
      std::size_t b = s.find_first_not_of(" \t\r\f\v");
      std::size_t e = s.find_last_not_of(" \t\r\f\v");
      s = (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
    };
    trim(line);
    // Strip a leading bullet: "-", "*", or U+2022.
    if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
      line.erase(0, 1);
      trim(line);
    } else if (line.size() >= 3 && line.compare(0, 3, "\xe2\x80\xa2") == 0) {
      line.erase(0, 3);
      trim(line);
    } else {
      // Strip numbering of the forms "1.", "1)", "(1)", "1:" followed by
      // whitespace. Bare digits stay: a claim may legitimately start with a
      // number.
      std::size_t i = 0;
      bool paren = i < line.size() && line[i] == '(';
      if (paren) ++i;
      std::size_t digits_start = i;
      while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
      if (i > digits_start && i < line.size()) {
        bool closed = paren ? line[i] == ')' : (line[i] == '.' || line[i] == ')' || line[i] == ':');
        if (closed && i + 1 < line.size() &&
            std::isspace(static_cast<unsigned char>(line[i + 1]))) {
          line.erase(0, i + 1);
          trim(line);
        }
      }
    }
    if (!line.empty()) claims.push_back(line);
  }
  if (claims.empty()) {
    throw EmptyExtractionError("claim extraction produced no claims");
  }
  return claims;
}

Verdict parse_verdict(const std::string& completion) {
  std::string lowered = completion;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::size_t t = lowered.rfind("the claim is true");
  std::size_t f = lowered.rfind("the claim is false");
  if (t == std::string::npos && f == std::string::npos) {
    throw UnparseableVerdictError("no verdict sentence in completion");
  }
  Verdict v;
  v.label = (f == std::string::npos) || (t != std::string::npos && t > f);
  v.rationale = completion;
  return v;
}

PairwiseChoice parse_pairwise_verdict(const std::string& completion) {
  std::optional<PairwiseChoice> last;
  std::size_t pos = 0;
  while ((pos = completion.find("[[", pos)) != std::string::npos) {
    if (pos + 4 < completion.size() && completion.compare(pos + 3, 2, "]]") == 0) {
      char c = static_cast<char>(std::toupper(static_cast<unsigned char>(completion[pos + 2])));
      if (c == 'A') last = PairwiseChoice::A;
      if (c == 'B') last = PairwiseChoice::B;
      if (c == 'C') last = PairwiseChoice::Tie;
      if (c == 'A' || c == 'B' || c == 'C') {
        pos += 5;
        continue;
      }
    }
    pos += 2;
  }
  if (!last) throw UnparseableVerdictError("no [[A]]/[[B]]/[[C]] verdict in completion");
  return *last;
}

int parse_likert(const std::string& completion) {
  std::optional<long> last;
  std::size_t pos = 0;
  while ((pos = completion.find("[[", pos)) != std::string::npos) {
    std::size_t digits = pos + 2;
    std::size_t end = digits;
    while (end < completion.size() &&
           std::isdigit(static_cast<unsigned char>(completion[end]))) {
      ++end;
    }
    if (end > digits && end + 1 < completion.size() && completion[end] == ']' &&
        completion[end + 1] == ']') {
      last = std::stol(completion.substr(digits, end - digits));
      pos = end + 2;
    } else {
      pos += 2;
    }
  }
  if (!last) throw UnparseableVerdictError("no [[score]] token in completion");
  if (*last < 1 || *last > 7) {
    throw OutOfRangeScoreError("score " + std::to_string(*last) + " outside 1..7");
  }
  return static_cast<int>(*last);
}

}  // namespace metacritique
