#include "dlap/promptgen.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "dlap/error.hpp"
#include "dlap/prompt_templates.hpp"
#include "dlap/simindex.hpp"

namespace dlap::promptgen {

namespace t = templates;

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fenced(std::string_view code) {
  std::string out = "```c\n";
  out += code;
  if (!code.empty() && code.back() != '\n') out += '\n';
  out += "```";
  return out;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

// ---- ICL -----------------------------------------------------------------

std::string IclBlock::render() const {
  std::string out(t::kIclMarker);
  out += '\n';
  if (pairs.empty()) {
    out += t::kIclEmpty;
    out += '\n';
    return out;
  }
  out += t::kIclHeader;
  out += "\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out += "\nReference " + std::to_string(i + 1) + " (similarity " + fixed2(pairs[i].similarity) +
           ")\n";
    out += t::kIclQuestion;
    out += '\n';
    out += fenced(pairs[i].code);
    out += '\n';
    out += t::kIclAnswerPrefix;
    out += fixed2(pairs[i].probability);
    out += '\n';
  }
  return out;
}

IclBlock assemble_icl(std::string target_id, const std::vector<CandidateRef>& candidates,
                      const std::vector<modelplug::ModelPrediction>& predictions, std::size_t m) {
  if (m == 0) throw Error(ErrorCode::kInvalidArgument, "ICL size m must be >= 1");
  if (candidates.size() != predictions.size())
    throw Error(ErrorCode::kInvalidArgument,
                "ICL candidates (" + std::to_string(candidates.size()) + ") and predictions (" +
                    std::to_string(predictions.size()) + ") are misaligned");
  IclBlock block;
  block.target_id = std::move(target_id);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto* r = candidates[i].record;
    if (r == nullptr) throw Error(ErrorCode::kInvalidArgument, "null ICL candidate");
    block.pairs.push_back({r->id, r->source, predictions[i].probability, candidates[i].similarity});
  }
  std::stable_sort(block.pairs.begin(), block.pairs.end(), [](const IclPair& a, const IclPair& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.id < b.id;
  });
  if (block.pairs.size() > m) block.pairs.resize(m);
  return block;
}

// ---- COT -----------------------------------------------------------------

std::string CotBlock::render() const {
  std::string out(t::kCotMarker);
  out += '\n';
  out += t::kCotHeader;
  out += '\n';
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += t::kStepHeadings[i];
    out += ' ';
    out += steps[i];
    out += '\n';
  }
  return out;
}

std::string render_step(std::string_view step, const corpus::FunctionRecord& target,
                        const taxonomy::QueryKey& key) {
  const std::string category =
      key.categories.empty() ? std::string(taxonomy::kUnknownCategory) : key.categories.front().code;
  std::string findings;
  if (key.categories.empty()) {
    findings = "no static analyzer findings";
  } else {
    for (const auto& c : key.categories) {
      if (!findings.empty()) findings += ", ";
      findings += c.code + " (score " + fixed2(c.score);
      if (!c.refinement.empty()) findings += ", " + c.refinement;
      findings += ")";
    }
  }
  std::string out(step);
  replace_all(out, "{code}", target.source);
  replace_all(out, "{category}", category);
  replace_all(out, "{findings}", findings);
  replace_all(out, "{verdict}", key.dl_vulnerable ? "vulnerable" : "not vulnerable");
  replace_all(out, "{probability}", fixed2(key.dl_probability));
  return out;
}

std::optional<std::array<std::string, taxonomy::kStepCount>> split_steps(std::string_view text) {
  std::array<std::size_t, taxonomy::kStepCount> at{};
  std::size_t from = 0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const auto pos = text.find(t::kStepHeadings[i], from);
    if (pos == std::string_view::npos) return std::nullopt;
    at[i] = pos;
    from = pos + t::kStepHeadings[i].size();
  }
  std::array<std::string, taxonomy::kStepCount> steps;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const auto begin = at[i] + t::kStepHeadings[i].size();
    const auto end = i + 1 < at.size() ? at[i + 1] : text.size();
    auto body = text.substr(begin, end - begin);
    const auto b = body.find_first_not_of(" \t\r\n");
    const auto e = body.find_last_not_of(" \t\r\n");
    steps[i] = b == std::string_view::npos ? std::string() : std::string(body.substr(b, e - b + 1));
  }
  return steps;
}

CotBlock CotCompleter::complete(const taxonomy::CotGuidance& guidance,
                                const corpus::FunctionRecord& target,
                                const taxonomy::QueryKey& key) const {
  CotBlock offline_block;
  offline_block.target_id = target.id;
  offline_block.guidance_source = guidance.source;
  for (std::size_t i = 0; i < taxonomy::kStepCount; ++i)
    offline_block.steps[i] = render_step(guidance.steps[i], target, key);
  if (!chat_) return offline_block;

  std::string request(t::kCotCompletionRequest);
  request += "\n\n";
  for (std::size_t i = 0; i < taxonomy::kStepCount; ++i) {
    request += t::kStepHeadings[i];
    request += ' ';
    request += offline_block.steps[i];
    request += '\n';
  }
  request += "\nFunction:\n" + fenced(target.source) + "\n";

  for (int attempt = 0; attempt < 2; ++attempt) {
    if (auto steps = split_steps(chat_(request))) {
      CotBlock live = offline_block;
      live.steps = std::move(*steps);
      return live;
    }
  }
  return offline_block;
}

// ---- DLAP ----------------------------------------------------------------

std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

std::string DlapPrompt::text() const {
  std::string out = icl.render();
  out += '\n';
  out += cot.render();
  out += '\n';
  out += t::kTargetMarker;
  out += '\n';
  out += fenced(target_code);
  out += "\n\n";
  out += t::kInstructionMarker;
  out += '\n';
  out += instruction;
  out += '\n';
  return out;
}

DlapPrompt assemble_dlap(IclBlock icl, CotBlock cot, const corpus::FunctionRecord& target,
                         std::size_t token_budget) {
  if (icl.target_id != target.id || cot.target_id != target.id)
    throw Error(ErrorCode::kInvalidArgument,
                "prompt blocks were built for different targets (icl=" + icl.target_id +
                    ", cot=" + cot.target_id + ", target=" + target.id + ")");
  DlapPrompt p{std::move(icl), std::move(cot), target.id, target.source, std::string(t::kInstruction)};
  p.token_estimate = estimate_tokens(p.text());
  while (token_budget > 0 && p.token_estimate > token_budget && !p.icl.pairs.empty()) {
    auto longest = std::max_element(
        p.icl.pairs.begin(), p.icl.pairs.end(),
        [](const IclPair& a, const IclPair& b) { return a.code.size() < b.code.size(); });
    p.icl.pairs.erase(longest);
    ++p.trimmed_candidates;
    p.token_estimate = estimate_tokens(p.text());
  }
  return p;
}

// ---- baselines -----------------------------------------------------------

const char* to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kRole: return "role";
    case BaselineKind::kAuxiliary: return "auxiliary";
    case BaselineKind::kCot2Step: return "cot2step";
  }
  return "?";
}

BaselineKind baseline_from_string(std::string_view s) {
  if (s == "role") return BaselineKind::kRole;
  if (s == "auxiliary") return BaselineKind::kAuxiliary;
  if (s == "cot2step") return BaselineKind::kCot2Step;
  throw Error(ErrorCode::kInvalidArgument, "unknown baseline kind \"" + std::string(s) + "\"");
}

namespace {

std::string fill(std::string_view tmpl, std::string_view code,
                 std::optional<std::string_view> aux = std::nullopt) {
  std::string out(tmpl);
  // Substitute the data-flow slot first so code containing "[DF description]"
  // is never rewritten.
  if (aux) {
    const auto pos = out.find(t::kDataFlowSlot);
    out.replace(pos, t::kDataFlowSlot.size(), *aux);
  }
  const auto pos = out.find(t::kCodeSlot);
  out.replace(pos, t::kCodeSlot.size(), code);
  return out;
}

}  // namespace

std::vector<std::string> render_baseline(BaselineKind kind, std::string_view code,
                                         std::optional<std::string_view> aux) {
  if ((kind == BaselineKind::kAuxiliary) != aux.has_value())
    throw Error(ErrorCode::kPrecondition,
                kind == BaselineKind::kAuxiliary
                    ? "auxiliary baseline needs data-flow text"
                    : std::string("data-flow text is only used by the auxiliary baseline"));
  switch (kind) {
    case BaselineKind::kRole:
      return {fill(t::kRoleBased, code)};
    case BaselineKind::kAuxiliary:
      return {fill(t::kAuxiliary, code, aux)};
    case BaselineKind::kCot2Step:
      return {fill(t::kTwoStepIntent, code), std::string(t::kTwoStepVerdict)};
  }
  throw Error(ErrorCode::kInternal, "unhandled baseline kind");
}

// ---- data flow -----------------------------------------------------------

namespace {

const std::set<std::string, std::less<>> kKeywords = {
    "auto",     "break",   "case",     "char",    "const",    "continue", "default",
    "do",       "double",  "else",     "enum",    "extern",   "float",    "for",
    "goto",     "if",      "inline",   "int",     "long",     "register", "restrict",
    "return",   "short",   "signed",   "sizeof",  "static",   "struct",   "switch",
    "typedef",  "union",   "unsigned", "void",    "volatile", "while",    "bool",
    "true",     "false",   "NULL",     "nullptr", "class",    "new",      "delete",
    "this",     "const_cast", "static_cast", "reinterpret_cast", "dynamic_cast"};

const std::set<std::string, std::less<>> kAssignOps = {"=",  "+=", "-=", "*=",  "/=", "%=",
                                                      "&=", "|=", "^=", "<<=", ">>="};

bool is_identifier(const std::string& tok) {
  const auto c = static_cast<unsigned char>(tok.front());
  return (std::isalpha(c) || c == '_') && !kKeywords.count(tok);
}

// Blanks out comments, keeping newlines so line numbers survive.
std::string strip_comments(std::string_view src) {
  std::string out(src);
  std::size_t i = 0;
  while (i < out.size()) {
    const char c = out[i];
    if (c == '"' || c == '\'') {
      for (++i; i < out.size() && out[i] != c && out[i] != '\n'; ++i)
        if (out[i] == '\\') ++i;
      ++i;
    } else if (c == '/' && i + 1 < out.size() && out[i + 1] == '/') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
    } else if (c == '/' && i + 1 < out.size() && out[i + 1] == '*') {
      out[i] = out[i + 1] = ' ';
      i += 2;
      while (i < out.size() && !(out[i] == '*' && i + 1 < out.size() && out[i + 1] == '/')) {
        if (out[i] != '\n') out[i] = ' ';
        ++i;
      }
      if (i < out.size()) out[i] = out[i + 1] = ' ', i += 2;
    } else {
      ++i;
    }
  }
  return out;
}

struct LineFlow {
  std::vector<std::string> defs, uses, calls;
};

void add_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

// Identifiers in [b, e) split into plain uses and calls; member names after
// '.' or '->' are skipped.
void collect_uses(const std::vector<std::string>& toks, std::size_t b, std::size_t e, LineFlow& f) {
  for (std::size_t i = b; i < e; ++i) {
    if (!is_identifier(toks[i])) continue;
    if (i > b && (toks[i - 1] == "." || toks[i - 1] == "->")) continue;
    if (i + 1 < e && toks[i + 1] == "(")
      add_unique(f.calls, toks[i]);
    else
      add_unique(f.uses, toks[i]);
  }
}

std::string lhs_target(const std::vector<std::string>& toks, std::size_t b, std::size_t e,
                       LineFlow& f) {
  std::vector<std::string> plain;
  std::string base;
  int depth = 0;
  for (std::size_t i = b; i < e; ++i) {
    const auto& tok = toks[i];
    if (tok == "[" || tok == "(") {
      ++depth;
      continue;
    }
    if (tok == "]" || tok == ")") {
      --depth;
      continue;
    }
    if (depth > 0) {
      if (is_identifier(tok)) add_unique(f.uses, tok);
      continue;
    }
    if ((tok == "." || tok == "->") && base.empty() && !plain.empty()) base = plain.back();
    if (is_identifier(tok) && !(i > b && (toks[i - 1] == "." || toks[i - 1] == "->")))
      plain.push_back(tok);
  }
  if (!base.empty()) return base;
  return plain.empty() ? std::string() : plain.back();
}

bool looks_like_declaration(const std::vector<std::string>& toks) {
  if (toks.size() < 3 || toks.back() != ";") return false;
  for (const auto& tok : toks)
    if (tok == "(") return false;
  static const std::set<std::string, std::less<>> kTypeWords = {
      "char",   "short",  "int",    "long",     "float",  "double",   "void",
      "signed", "unsigned", "const", "static",  "struct", "union",    "enum",
      "volatile", "register", "extern", "bool", "auto"};
  if (kTypeWords.count(toks.front())) return true;
  std::size_t i = 1;
  if (!is_identifier(toks[0])) return false;
  while (i < toks.size() && toks[i] == "*") ++i;
  return i < toks.size() && is_identifier(toks[i]);
}

// A function definition header such as `static int get(int *p) {`. Returns
// the index of the opening parenthesis, or 0 when the line is not one.
std::size_t definition_header(const std::vector<std::string>& toks) {
  static const std::set<std::string, std::less<>> kNotTypes = {
      "if", "while", "for", "switch", "return", "else", "do", "case", "sizeof", "goto"};
  if (toks.size() < 4 || kNotTypes.count(toks.front())) return 0;
  if (toks.back() != "{" && toks.back() != ")") return 0;
  std::size_t open = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] == ";" || kAssignOps.count(toks[i])) return 0;
    if (toks[i] == "(" && open == 0) open = i;
  }
  if (open < 2 || !is_identifier(toks[open - 1])) return 0;
  const auto& before = toks[open - 2];
  const bool typed = before == "*" || is_identifier(before) || kKeywords.count(before);
  return typed ? open : 0;
}

// Index of the first top-level assignment operator in [b, e), or e.
std::size_t find_assign(const std::vector<std::string>& toks, std::size_t b, std::size_t e) {
  int depth = 0;
  for (std::size_t i = b; i < e; ++i) {
    if (toks[i] == "(" || toks[i] == "[") ++depth;
    if (toks[i] == ")" || toks[i] == "]") --depth;
    if (depth == 0 && kAssignOps.count(toks[i])) return i;
  }
  return e;
}

LineFlow analyze_line(const std::vector<std::string>& toks) {
  LineFlow f;
  if (toks.empty() || toks.front() == "#") return f;

  // Parameters are definitions; the function's own name is not a call.
  if (const auto open = definition_header(toks); open > 0) {
    std::string last;
    int depth = 0;
    for (std::size_t i = open; i < toks.size(); ++i) {
      const auto& tok = toks[i];
      if (tok == "(" || tok == "[") ++depth;
      if (tok == ")" || tok == "]") --depth;
      if ((tok == "," && depth == 1) || (tok == ")" && depth == 0)) {
        if (!last.empty()) add_unique(f.defs, last);
        last.clear();
        if (depth == 0) break;
      } else if (depth == 1 && is_identifier(tok)) {
        last = tok;
      }
    }
    return f;
  }

  if (looks_like_declaration(toks)) {
    std::size_t seg = 0;
    for (std::size_t i = 0; i <= toks.size(); ++i) {
      if (i == toks.size() || toks[i] == "," || toks[i] == ";") {
        const auto eq = find_assign(toks, seg, i);
        const auto target = lhs_target(toks, seg, eq, f);
        if (!target.empty()) add_unique(f.defs, target);
        if (eq < i) collect_uses(toks, eq + 1, i, f);
        seg = i + 1;
      }
    }
    return f;
  }

  if (const auto assign = find_assign(toks, 0, toks.size()); assign < toks.size()) {
    const auto target = lhs_target(toks, 0, assign, f);
    if (!target.empty()) {
      add_unique(f.defs, target);
      if (toks[assign] != "=") add_unique(f.uses, target);
    }
    collect_uses(toks, assign + 1, toks.size(), f);
    return f;
  }

  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i] != "++" && toks[i] != "--") continue;
    if (i + 1 < toks.size() && is_identifier(toks[i + 1])) add_unique(f.defs, toks[i + 1]);
    if (i > 0 && is_identifier(toks[i - 1])) add_unique(f.defs, toks[i - 1]);
  }
  collect_uses(toks, 0, toks.size(), f);
  return f;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

std::string summarize_dataflow(std::string_view source, std::size_t max_chars) {
  const auto clean = strip_comments(source);
  std::string out;
  std::size_t line_no = 0, start = 0;
  while (start <= clean.size()) {
    auto end = clean.find('\n', start);
    if (end == std::string::npos) end = clean.size();
    ++line_no;
    const auto flow = analyze_line(simindex::tokenize(std::string_view(clean).substr(start, end - start)));
    std::string parts;
    if (!flow.defs.empty()) parts += "defines " + join(flow.defs);
    if (!flow.uses.empty()) parts += (parts.empty() ? "" : "; ") + std::string("uses ") + join(flow.uses);
    if (!flow.calls.empty()) parts += (parts.empty() ? "" : "; ") + std::string("calls ") + join(flow.calls);
    if (!parts.empty()) {
      std::string line = "line " + std::to_string(line_no) + ": " + parts + "\n";
      if (out.size() + line.size() > max_chars) {
        out += "...\n";
        break;
      }
      out += line;
    }
    if (end == clean.size()) break;
    start = end + 1;
  }
  if (!out.empty()) out.pop_back();
  return out;
}

}  // namespace dlap::promptgen
