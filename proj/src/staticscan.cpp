#include "dlap/staticscan.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>
#include <tuple>

#include "dlap/error.hpp"

namespace dlap::staticscan {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<int> to_int(std::string_view s) {
  const auto t = trim(s);
  int v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) return std::nullopt;
  return v;
}

// RFC 4180 records: quoted fields may hold commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> read_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        quoted = true;
        any = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        any = true;
        break;
      case '\r':
        break;
      case '\n':
        if (any || !field.empty()) {
          row.push_back(std::move(field));
          rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
        break;
      default:
        field.push_back(c);
        any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kFormat, "flawfinder CSV: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

// "CWE-120", "CWE-120, CWE-20", "CWE-119!/CWE-120": the first listed entry
// wins; inside a slash list the entry not marked '!' is the specific one.
std::optional<int> parse_cwe_list(std::string_view text) {
  auto first = text.substr(0, text.find(','));
  std::optional<int> marked;
  while (!first.empty()) {
    const auto slash = first.find('/');
    const auto part = first.substr(0, slash);
    first = slash == std::string_view::npos ? std::string_view{} : first.substr(slash + 1);
    const auto pos = part.find("CWE-");
    if (pos == std::string_view::npos) continue;
    std::size_t end = pos + 4;
    while (end < part.size() && std::isdigit(static_cast<unsigned char>(part[end]))) ++end;
    const auto value = to_int(part.substr(pos + 4, end - pos - 4));
    if (!value) continue;
    if (part.find('!') == std::string_view::npos) return value;
    if (!marked) marked = value;
  }
  return marked;
}

}  // namespace

const char* to_string(Tool tool) {
  return tool == Tool::kFlawfinder ? "flawfinder" : "cppcheck";
}

Tool tool_from_string(std::string_view s) {
  if (s == "flawfinder") return Tool::kFlawfinder;
  if (s == "cppcheck") return Tool::kCppcheck;
  throw Error(ErrorCode::kFormat, "unknown tool \"" + std::string(s) + "\"");
}

SeverityTable default_cppcheck_severities() {
  return {{"error", 5},       {"warning", 3}, {"performance", 2},
          {"portability", 2}, {"style", 1},   {"information", 1}};
}

std::vector<StaticFinding> parse_flawfinder(std::string_view csv) {
  auto rows = read_csv(csv);
  if (rows.empty()) throw Error(ErrorCode::kFormat, "flawfinder CSV: missing header row");
  const auto& header = rows.front();
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (lower(trim(header[i])) == name) return i;
    return std::nullopt;
  };
  const auto file = column("file"), line = column("line"), level = column("level"),
             name = column("name"), cwes = column("cwes"), warning = column("warning"),
             category = column("category");
  std::string missing;
  for (auto [col, label] : {std::pair{file, "File"}, {line, "Line"}, {level, "Level"}, {name, "Name"}})
    if (!col) missing += std::string(missing.empty() ? "" : ", ") + label;
  if (!missing.empty())
    throw Error(ErrorCode::kFormat, "flawfinder CSV: missing required column(s) " + missing);

  std::vector<StaticFinding> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kFormat, "flawfinder CSV row " + std::to_string(r) + ": " + why);
    };
    auto cell = [&](std::optional<std::size_t> col) -> std::string {
      return col && *col < row.size() ? row[*col] : std::string();
    };
    if (row.size() < header.size() && (row.size() <= *file || row.size() <= *line ||
                                       row.size() <= *level || row.size() <= *name))
      throw fail("expected " + std::to_string(header.size()) + " fields, got " +
                 std::to_string(row.size()));
    StaticFinding f;
    f.tool = Tool::kFlawfinder;
    f.file = cell(file);
    f.rule_id = trim(cell(name));
    const auto line_no = to_int(cell(line));
    if (!line_no || *line_no < 1) throw fail("bad line number \"" + cell(line) + "\"");
    f.line = *line_no;
    const auto sev = to_int(cell(level));
    if (!sev) throw fail("bad level \"" + cell(level) + "\"");
    if (*sev < 0 || *sev > 5) throw fail("level " + std::to_string(*sev) + " is outside 0-5");
    f.severity = *sev;
    if (f.rule_id.empty()) throw fail("empty rule name");
    f.cwe = parse_cwe_list(cell(cwes));
    f.message = trim(cell(warning));
    if (f.message.empty()) f.message = trim(cell(category)) + ": " + f.rule_id;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<StaticFinding> parse_cppcheck(std::string_view xml, const SeverityTable& severities) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::kFormat, std::string("cppcheck XML: ") + e.what());
  }
  const auto results = tree.get_child_optional("results");
  if (!results) throw Error(ErrorCode::kFormat, "cppcheck XML: missing <results> root");
  const auto version = results->get_optional<std::string>("<xmlattr>.version");
  if (version && *version != "2")
    throw Error(ErrorCode::kFormat, "cppcheck XML: expected version 2, got " + *version);

  std::vector<StaticFinding> out;
  const auto errors = results->get_child_optional("errors");
  if (!errors) return out;
  std::size_t index = 0;
  for (const auto& [tag, node] : *errors) {
    if (tag != "error") continue;
    ++index;
    auto fail = [&](const std::string& why) {
      return Error(ErrorCode::kFormat,
                   "cppcheck XML error element " + std::to_string(index) + ": " + why);
    };
    StaticFinding f;
    f.tool = Tool::kCppcheck;
    f.rule_id = node.get<std::string>("<xmlattr>.id", "");
    if (f.rule_id.empty()) throw fail("missing id attribute");
    const auto sev = node.get<std::string>("<xmlattr>.severity", "");
    auto it = severities.find(sev);
    if (it == severities.end())
      throw Error(ErrorCode::kFormat, "cppcheck XML: unknown severity class \"" + sev +
                                          "\" on " + f.rule_id);
    f.severity = it->second;
    f.message = node.get<std::string>("<xmlattr>.msg", "");
    if (auto cwe = node.get_optional<std::string>("<xmlattr>.cwe")) {
      const auto v = to_int(*cwe);
      if (!v) throw fail("bad cwe attribute \"" + *cwe + "\"");
      f.cwe = *v;
    }
    if (auto loc = node.get_child_optional("location")) {
      f.file = loc->get<std::string>("<xmlattr>.file", "");
      const auto line = to_int(loc->get<std::string>("<xmlattr>.line", "1"));
      if (!line || *line < 0) throw fail("bad location line");
      f.line = std::max(*line, 1);
    }
    out.push_back(std::move(f));
  }
  return out;
}

std::string findings_to_jsonl(const std::vector<StaticFinding>& findings) {
  std::string out;
  for (const auto& f : findings) {
    nlohmann::ordered_json j;
    j["tool"] = to_string(f.tool);
    j["rule_id"] = f.rule_id;
    j["cwe"] = f.cwe ? nlohmann::ordered_json(*f.cwe) : nlohmann::ordered_json(nullptr);
    j["severity"] = f.severity;
    j["message"] = f.message;
    j["file"] = f.file;
    j["line"] = f.line;
    out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    out += '\n';
  }
  return out;
}

std::vector<StaticFinding> findings_from_jsonl(std::string_view text, const std::string& origin) {
  std::vector<StaticFinding> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StaticFinding f;
      f.tool = tool_from_string(j.at("tool").get<std::string>());
      f.rule_id = j.at("rule_id").get<std::string>();
      if (!j.at("cwe").is_null()) f.cwe = j.at("cwe").get<int>();
      f.severity = j.at("severity").get<int>();
      f.message = j.value("message", "");
      f.file = j.value("file", "");
      f.line = j.value("line", 1);
      if (f.severity < 0 || f.severity > 5) throw Error(ErrorCode::kFormat, "severity outside 0-5");
      if (f.line < 1) throw Error(ErrorCode::kFormat, "line must be >= 1");
      out.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, origin + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

// ---- mapping -------------------------------------------------------------

ScanMapping ScanMapping::parse(std::string_view yaml, const std::string& origin) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kFormat, origin + ": " + e.what());
  }
  auto fail = [&](const std::string& why) { return Error(ErrorCode::kSchema, origin + ": " + why); };
  if (!doc.IsMap() || doc["schema"].as<std::string>("") != "dlap-scan-mapping/1")
    throw fail("expected schema dlap-scan-mapping/1");
  ScanMapping m;
  try {
    if (const auto rules = doc["rules"]) {
      for (const auto& tool : rules) {
        auto& table = m.rules[tool_from_string(tool.first.as<std::string>())];
        for (const auto& kv : tool.second)
          table[kv.first.as<std::string>()] = kv.second.as<std::string>();
      }
    }
    if (const auto aliases = doc["cwe"])
      for (const auto& kv : aliases) m.cwe_aliases[kv.first.as<int>()] = kv.second.as<std::string>();
    if (const auto sev = doc["severity"]; sev && sev["cppcheck"]) {
      m.cppcheck_severity.clear();
      for (const auto& kv : sev["cppcheck"]) {
        const int v = kv.second.as<int>();
        if (v < 0 || v > 5) throw fail("cppcheck severity weights must lie in 0-5");
        m.cppcheck_severity[kv.first.as<std::string>()] = v;
      }
    }
    if (const auto w = doc["weights"])
      for (const auto& kv : w) {
        const double v = kv.second.as<double>();
        if (!(v >= 0.0)) throw fail("tool weights must be >= 0");
        m.weights[tool_from_string(kv.first.as<std::string>())] = v;
      }
  } catch (const YAML::Exception& e) {
    throw fail(e.what());
  }
  return m;
}

ScanMapping ScanMapping::load(const std::string& path) { return parse(read_file(path), path); }

std::vector<std::string> ScanMapping::unresolved(const taxonomy::CotLibrary& library) const {
  std::vector<std::string> out;
  for (const auto& [tool, table] : rules)
    for (const auto& [rule, code] : table)
      if (!library.find(code)) out.push_back(std::string(to_string(tool)) + ":" + rule + " -> " + code);
  for (const auto& [cwe, code] : cwe_aliases)
    if (!library.find(code)) out.push_back("CWE-" + std::to_string(cwe) + " -> " + code);
  return out;
}

double CategoryScores::total() const {
  double t = 0.0;
  for (const auto& [code, s] : combined) t += s;
  return t;
}

std::string resolve_node(const StaticFinding& f, const ScanMapping& mapping,
                         const taxonomy::CotLibrary& library) {
  if (auto t = mapping.rules.find(f.tool); t != mapping.rules.end())
    if (auto r = t->second.find(f.rule_id); r != t->second.end() && library.find(r->second))
      return r->second;
  if (f.cwe) {
    if (const auto* node = library.find_by_cwe(*f.cwe)) return node->code;
    if (auto a = mapping.cwe_aliases.find(*f.cwe);
        a != mapping.cwe_aliases.end() && library.find(a->second))
      return a->second;
  }
  return std::string(taxonomy::kUnknownCategory);
}

CategoryScores map_to_taxonomy(const std::vector<StaticFinding>& findings,
                               const ScanMapping& mapping, const taxonomy::CotLibrary& library) {
  // Canonical order so floating-point sums do not depend on input order.
  std::vector<const StaticFinding*> ordered;
  for (const auto& f : findings) ordered.push_back(&f);
  std::sort(ordered.begin(), ordered.end(), [](const StaticFinding* a, const StaticFinding* b) {
    return std::tie(a->tool, a->file, a->line, a->rule_id, a->severity, a->cwe, a->message) <
           std::tie(b->tool, b->file, b->line, b->rule_id, b->severity, b->cwe, b->message);
  });

  CategoryScores scores;
  for (const auto* f : ordered) {
    const auto node = resolve_node(*f, mapping, library);
    const auto major = library.major_of(node);
    const auto w = mapping.weights.count(f->tool) ? mapping.weights.at(f->tool) : 1.0;
    const double contribution = static_cast<double>(f->severity) * w;
    scores.per_tool[f->tool][major] += contribution;
    scores.combined[major] += contribution;
    if (node != major) scores.by_node[major][node] += contribution;
  }
  return scores;
}

RankedCategories top_k(const CategoryScores& scores, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  RankedCategories ranked;
  for (const auto& [code, score] : scores.combined) {
    if (score <= 0.0) continue;
    RankedCategory rc{code, score, {}};
    if (auto it = scores.by_node.find(code); it != scores.by_node.end()) {
      double best = 0.0;
      for (const auto& [node, s] : it->second)  // map order breaks ties by code
        if (s > best) {
          best = s;
          rc.refinement = node;
        }
    }
    ranked.push_back(std::move(rc));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedCategory& a, const RankedCategory& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.code < b.code;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

// ---- association ---------------------------------------------------------

FindingIndex::FindingIndex(std::vector<StaticFinding> findings,
                           std::map<std::string, FunctionSpan> spans)
    : findings_(std::move(findings)), spans_(spans.begin(), spans.end()) {}

std::map<std::string, FunctionSpan> FindingIndex::load_spans(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kFormat, path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kFormat, path + ": expected an object of spans");
  std::map<std::string, FunctionSpan> spans;
  for (const auto& [id, v] : j.items()) {
    try {
      FunctionSpan s{v.at("file").get<std::string>(), v.at("start").get<int>(), v.at("end").get<int>()};
      if (s.start_line < 1 || s.end_line < s.start_line)
        throw Error(ErrorCode::kFormat, "bad line range");
      spans.emplace(id, std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat, path + ": span for " + id + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, path + ": span for " + id + ": " + e.what());
    }
  }
  return spans;
}

std::vector<StaticFinding> FindingIndex::for_function(std::string_view id) const {
  std::vector<StaticFinding> out;
  if (!spans_.empty()) {
    auto it = spans_.find(id);
    if (it == spans_.end()) return out;
    const auto& span = it->second;
    for (const auto& f : findings_)
      if (f.file == span.file && f.line >= span.start_line && f.line <= span.end_line)
        out.push_back(f);
    return out;
  }
  for (const auto& f : findings_)
    if (std::filesystem::path(f.file).stem().string() == id) out.push_back(f);
  return out;
}

}  // namespace dlap::staticscan
