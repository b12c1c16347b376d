#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlap/category.hpp"
#include "dlap/modelplug.hpp"

namespace dlap::taxonomy {

inline constexpr std::array<std::string_view, 6> kMajorCategories = {"SFE", "LOG", "MEM",
                                                                     "NUM", "IDN", "UNT"};
inline constexpr std::string_view kUnknownCategory = "UNT";

bool is_major(std::string_view code);

/// The five steps of the detection chain, in prompt order.
enum class CotStep { kSemantics, kLogic, kInternalRisks, kExternalRisks, kChain };
inline constexpr std::size_t kStepCount = 5;
inline constexpr std::array<std::string_view, kStepCount> kStepKeys = {
    "semantics", "logic", "internal_risks", "external_risks", "chain"};

/// Placeholders a guidance template may use.
inline constexpr std::array<std::string_view, 5> kPlaceholders = {
    "code", "category", "findings", "verdict", "probability"};

struct CotGuidance {
  std::array<std::string, kStepCount> steps;
  // Node the text came from (after inheritance).
  std::string source;

  const std::string& step(CotStep s) const { return steps[static_cast<std::size_t>(s)]; }
  friend bool operator==(const CotGuidance&, const CotGuidance&) = default;
};

struct TaxonomyNode {
  std::string code;
  std::string name;
  std::optional<std::string> parent;  // set for subcategories
  std::vector<int> cwe_ids;
  CotGuidance guidance;
};

/// Placeholder names found in `text`, in order of appearance.
std::vector<std::string> placeholders_in(std::string_view text);

/// Hierarchical COT library: six majors plus CWE-keyed subcategories.
/// Immutable once loaded; all lookups are const and thread-safe.
class CotLibrary {
 public:
  /// Parses and validates a library document (YAML). `origin` names it in errors.
  static CotLibrary parse(std::string_view text, const std::string& origin = "<memory>");
  static CotLibrary load(const std::string& path);

  const std::string& version() const { return version_; }
  const std::vector<TaxonomyNode>& nodes() const { return nodes_; }
  const TaxonomyNode* find(std::string_view code) const;
  const TaxonomyNode* find_by_cwe(int cwe) const;
  /// Major category of `code`; UNT for unknown codes.
  std::string major_of(std::string_view code) const;
  std::size_t subcategory_count() const { return nodes_.size() - kMajorCategories.size(); }

 private:
  CotLibrary() = default;

  std::string version_;
  std::vector<TaxonomyNode> nodes_;
  std::map<std::string, std::size_t, std::less<>> by_code_;
  std::map<int, std::size_t> by_cwe_;
};

/// Retrieval key: ranked static categories plus the model's judgment.
struct QueryKey {
  staticscan::RankedCategories categories;
  bool dl_vulnerable = false;
  double dl_probability = 0.0;

  /// Canonical text, e.g. `{categories:[MEM,IDN], dl:vulnerable}`. A
  /// `refine:[...]` entry precedes `dl` when any category carries a refinement.
  std::string serialize() const;
};

/// Re-sorts `ranked` into canonical order (score desc, code asc).
QueryKey build_query_key(staticscan::RankedCategories ranked,
                         const modelplug::ModelPrediction& prediction);

/// Guidance for the top-ranked category: its refined subcategory when the
/// library has it, else the major itself, else UNT. Total over all keys.
const CotGuidance& retrieve_guidance(const CotLibrary& library, const QueryKey& key);

}  // namespace dlap::taxonomy
