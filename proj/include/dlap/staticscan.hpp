#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlap/category.hpp"
#include "dlap/corpus.hpp"
#include "dlap/taxonomy.hpp"

namespace dlap::staticscan {

enum class Tool { kFlawfinder, kCppcheck };

const char* to_string(Tool tool);
Tool tool_from_string(std::string_view s);

struct StaticFinding {
  Tool tool = Tool::kFlawfinder;
  std::string rule_id;
  std::optional<int> cwe;
  int severity = 0;  // 0..5
  std::string message;
  std::string file;
  int line = 1;

  friend bool operator==(const StaticFinding&, const StaticFinding&) = default;
};

/// Cppcheck severity class -> 0..5 weight.
using SeverityTable = std::map<std::string, int, std::less<>>;
SeverityTable default_cppcheck_severities();

/// Flawfinder `--csv` output. Columns are located by header name; File,
/// Line, Level and Name are required, CWEs and Warning are optional.
std::vector<StaticFinding> parse_flawfinder(std::string_view csv);

/// Cppcheck `--xml-version=2` output.
std::vector<StaticFinding> parse_cppcheck(std::string_view xml,
                                          const SeverityTable& severities =
                                              default_cppcheck_severities());

/// Canonical JSON-Lines form (one finding per line) and its inverse.
std::string findings_to_jsonl(const std::vector<StaticFinding>& findings);
std::vector<StaticFinding> findings_from_jsonl(std::string_view text,
                                               const std::string& origin = "<memory>");

/// Rule/CWE -> taxonomy node routing plus per-tool scoring knobs. Loaded from
/// a YAML data file so it can be retuned without a rebuild.
struct ScanMapping {
  // tool -> rule id -> node code
  std::map<Tool, std::map<std::string, std::string, std::less<>>> rules;
  // CWE ids without a node of their own -> node code
  std::map<int, std::string> cwe_aliases;
  SeverityTable cppcheck_severity = default_cppcheck_severities();
  std::map<Tool, double> weights = {{Tool::kFlawfinder, 1.0}, {Tool::kCppcheck, 1.0}};

  static ScanMapping parse(std::string_view yaml, const std::string& origin = "<memory>");
  static ScanMapping load(const std::string& path);

  /// Node codes referenced by the table that the library cannot resolve.
  std::vector<std::string> unresolved(const taxonomy::CotLibrary& library) const;
};

/// Accumulated scores keyed by major category code.
struct CategoryScores {
  std::map<Tool, std::map<std::string, double>> per_tool;
  std::map<std::string, double> combined;
  // major -> subcategory node -> score, for refinement of the key.
  std::map<std::string, std::map<std::string, double>> by_node;

  double total() const;
};

/// Node a finding routes to: rule table, then the finding's own CWE, then the
/// CWE alias table, else UNT.
std::string resolve_node(const StaticFinding& finding, const ScanMapping& mapping,
                         const taxonomy::CotLibrary& library);

/// Each finding adds severity x tool weight to exactly one major category.
CategoryScores map_to_taxonomy(const std::vector<StaticFinding>& findings,
                               const ScanMapping& mapping,
                               const taxonomy::CotLibrary& library);

/// Top-K majors by combined score (ties by code), zero scores dropped.
RankedCategories top_k(const CategoryScores& scores, std::size_t k);

/// Line range of one function inside a scanned file.
struct FunctionSpan {
  std::string file;
  int start_line = 1;
  int end_line = 1;
};

/// Routes findings to functions. With a span map, a finding belongs to every
/// function whose span contains its (file, line); without one, a finding
/// belongs to the function whose id equals the file's stem.
class FindingIndex {
 public:
  FindingIndex(std::vector<StaticFinding> findings,
               std::map<std::string, FunctionSpan> spans = {});

  /// JSON object: id -> {"file", "start", "end"}.
  static std::map<std::string, FunctionSpan> load_spans(const std::string& path);

  std::vector<StaticFinding> for_function(std::string_view id) const;
  std::size_t size() const { return findings_.size(); }

 private:
  std::vector<StaticFinding> findings_;
  std::map<std::string, FunctionSpan, std::less<>> spans_;
};

}  // namespace dlap::staticscan
