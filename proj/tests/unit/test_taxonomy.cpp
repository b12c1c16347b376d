#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "dlap/defaults.hpp"
#include "dlap/error.hpp"
#include "dlap/staticscan.hpp"
#include "dlap/taxonomy.hpp"

using namespace dlap;
using namespace dlap::taxonomy;
using staticscan::RankedCategory;

namespace {

const CotLibrary& library() {
  static const auto lib = CotLibrary::parse(defaults::cot_library_yaml(), "default");
  return lib;
}

std::string major_yaml(const std::string& code) {
  std::string out = "  - code: " + code + "\n    name: " + code + " name\n    guidance:\n";
  for (auto step : kStepKeys) out += "      " + std::string(step) + ": " + code + " " + std::string(step) + " {category}\n";
  return out;
}

// Minimal library with the given majors and a raw subcategory section.
std::string small_library(const std::vector<std::string>& majors, const std::string& subs = "") {
  std::string out = "schema: dlap-cot-library/1\nversion: t1\ncategories:\n";
  for (const auto& m : majors) out += major_yaml(m);
  if (!subs.empty()) out += "subcategories:\n" + subs;
  return out;
}

const std::vector<std::string> kAllMajors = {"SFE", "LOG", "MEM", "NUM", "IDN", "UNT"};

modelplug::ModelPrediction prediction(double p) {
  return modelplug::make_prediction(p, 0.5, "t");
}

ErrorCode load_error(const std::string& text, std::string* message = nullptr) {
  try {
    CotLibrary::parse(text, "lib.yaml");
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  return ErrorCode::kInternal;
}

}  // namespace

TEST(CotLibraryLoad, DefaultLibraryHasTheSixMajors) {
  std::set<std::string> majors;
  for (const auto& n : library().nodes())
    if (!n.parent) majors.insert(n.code);
  EXPECT_EQ(majors, (std::set<std::string>{"SFE", "LOG", "MEM", "NUM", "IDN", "UNT"}));
  EXPECT_EQ(library().version(), "1.0-default");
  EXPECT_EQ(library().subcategory_count(), 15u);
}

TEST(CotLibraryLoad, DefaultSubcategoriesCoverTheListedCwes) {
  for (int cwe : {120, 121, 125, 190, 284, 287, 362, 415, 416, 476, 787, 798, 822, 369, 20}) {
    const auto* node = library().find_by_cwe(cwe);
    ASSERT_NE(node, nullptr) << cwe;
    EXPECT_EQ(node->code, "CWE-" + std::to_string(cwe));
    ASSERT_TRUE(node->parent.has_value());
    EXPECT_TRUE(is_major(*node->parent));
  }
}

TEST(CotLibraryLoad, EveryNodeHasFiveNonEmptySteps) {
  for (const auto& n : library().nodes())
    for (const auto& s : n.guidance.steps) EXPECT_FALSE(s.empty()) << n.code;
}

TEST(CotLibraryLoad, MissingUntIsSchemaError) {
  std::string msg;
  EXPECT_EQ(load_error(small_library({"SFE", "LOG", "MEM", "NUM", "IDN"}), &msg), ErrorCode::kSchema);
  EXPECT_NE(msg.find("UNT"), std::string::npos);
}

TEST(CotLibraryLoad, OrphanSubcategoryIsNamed) {
  std::string msg;
  const auto text = small_library(kAllMajors,
                                  "  - code: CWE-9\n    name: nine\n    parent: XYZ\n    cwe: [9]\n");
  EXPECT_EQ(load_error(text, &msg), ErrorCode::kSchema);
  EXPECT_NE(msg.find("CWE-9"), std::string::npos);
  EXPECT_NE(msg.find("lib.yaml"), std::string::npos);

  const auto no_parent = small_library(kAllMajors, "  - code: CWE-9\n    name: nine\n");
  EXPECT_EQ(load_error(no_parent, &msg), ErrorCode::kSchema);
  EXPECT_NE(msg.find("CWE-9"), std::string::npos);
}

TEST(CotLibraryLoad, SubcategoryWithoutGuidanceInheritsVerbatim) {
  const auto lib = CotLibrary::parse(
      small_library(kAllMajors, "  - code: CWE-7\n    name: seven\n    parent: MEM\n    cwe: [7]\n"));
  const auto* sub = lib.find("CWE-7");
  ASSERT_NE(sub, nullptr);
  EXPECT_EQ(sub->guidance.steps, lib.find("MEM")->guidance.steps);
  EXPECT_EQ(sub->guidance.source, "MEM");
}

TEST(CotLibraryLoad, PartialGuidanceOverridesOnlyNamedSteps) {
  const auto lib = CotLibrary::parse(small_library(
      kAllMajors,
      "  - code: CWE-7\n    name: seven\n    parent: NUM\n    guidance:\n      logic: own logic\n"));
  const auto& g = lib.find("CWE-7")->guidance;
  const auto& parent = lib.find("NUM")->guidance;
  EXPECT_EQ(g.step(CotStep::kLogic), "own logic");
  EXPECT_EQ(g.step(CotStep::kSemantics), parent.step(CotStep::kSemantics));
  EXPECT_EQ(g.step(CotStep::kChain), parent.step(CotStep::kChain));
  EXPECT_EQ(g.source, "CWE-7");

  // In the shipped library the null-pointer node overrides four of five steps.
  const auto& np = library().find("CWE-476")->guidance;
  EXPECT_EQ(np.source, "CWE-476");
  EXPECT_EQ(np.step(CotStep::kSemantics), library().find("IDN")->guidance.step(CotStep::kSemantics));
  EXPECT_NE(np.step(CotStep::kLogic), library().find("IDN")->guidance.step(CotStep::kLogic));
}

TEST(CotLibraryLoad, StructuralErrors) {
  EXPECT_EQ(load_error("schema: other/2\nversion: x\n"), ErrorCode::kSchema);
  EXPECT_EQ(load_error("- just\n- a list\n"), ErrorCode::kSchema);
  EXPECT_EQ(load_error("schema: [broken\n"), ErrorCode::kFormat);
  // Duplicate code.
  EXPECT_EQ(load_error(small_library(kAllMajors, "  - code: MEM\n    name: again\n    parent: MEM\n")),
            ErrorCode::kSchema);
  // A CWE claimed twice.
  EXPECT_EQ(load_error(small_library(kAllMajors,
                                     "  - code: A\n    name: a\n    parent: MEM\n    cwe: [5]\n"
                                     "  - code: B\n    name: b\n    parent: NUM\n    cwe: [5]\n")),
            ErrorCode::kSchema);
  // Non-major code in the majors list.
  auto extra = small_library(kAllMajors);
  extra.insert(extra.find("categories:\n") + 12, major_yaml("ABC"));
  EXPECT_EQ(load_error(extra), ErrorCode::kSchema);
  // Major lacking a step.
  auto gap = small_library(kAllMajors);
  gap.erase(gap.find("      chain: SFE"), gap.find('\n', gap.find("      chain: SFE")) + 1 - gap.find("      chain: SFE"));
  std::string msg;
  EXPECT_EQ(load_error(gap, &msg), ErrorCode::kSchema);
  EXPECT_NE(msg.find("chain"), std::string::npos);
}

TEST(CotLibraryLoad, UnknownPlaceholderFailsAtLoad) {
  std::string msg;
  const auto text = small_library(
      kAllMajors, "  - code: CWE-7\n    name: s\n    parent: MEM\n    guidance:\n      logic: \"{bogus}\"\n");
  EXPECT_EQ(load_error(text, &msg), ErrorCode::kSchema);
  EXPECT_NE(msg.find("{bogus}"), std::string::npos);
  const auto bad_step = small_library(
      kAllMajors, "  - code: CWE-7\n    name: s\n    parent: MEM\n    guidance:\n      sixth: x\n");
  EXPECT_EQ(load_error(bad_step), ErrorCode::kSchema);
}

TEST(CotLibraryLoad, LoadFromMissingFileIsIoError) {
  try {
    CotLibrary::load("/nonexistent/lib.yaml");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Placeholders, ExtractsWordsInOrder) {
  EXPECT_EQ(placeholders_in("a {code} b {category}{findings} {x y} {}"),
            (std::vector<std::string>{"code", "category", "findings"}));
  EXPECT_TRUE(placeholders_in("{ unterminated").empty());
}

TEST(MajorOf, ResolvesParentsAndDefaultsToUnt) {
  EXPECT_EQ(library().major_of("CWE-476"), "IDN");
  EXPECT_EQ(library().major_of("CWE-120"), "MEM");
  EXPECT_EQ(library().major_of("MEM"), "MEM");
  EXPECT_EQ(library().major_of("CWE-99999"), "UNT");
}

// ---- query key -------------------------------------------------------------

TEST(QueryKeyTest, CanonicalFormSortsRanking) {
  const auto key = build_query_key({{"IDN", 5, {}}, {"MEM", 8, {}}}, prediction(0.9));
  EXPECT_EQ(key.serialize(), "{categories:[MEM,IDN], dl:vulnerable}");
  EXPECT_TRUE(key.dl_vulnerable);
  EXPECT_DOUBLE_EQ(key.dl_probability, 0.9);
}

TEST(QueryKeyTest, EmptyRankingBenign) {
  EXPECT_EQ(build_query_key({}, prediction(0.1)).serialize(), "{categories:[], dl:benign}");
}

TEST(QueryKeyTest, RefinementAppearsWhenPresent) {
  const auto key = build_query_key({{"MEM", 8, "CWE-120"}, {"IDN", 5, {}}}, prediction(0.2));
  EXPECT_EQ(key.serialize(), "{categories:[MEM,IDN], refine:[CWE-120,-], dl:benign}");
}

TEST(QueryKeyTest, DeterministicAndOrderIndependent) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    staticscan::RankedCategories ranked;
    for (auto code : kMajorCategories)
      if (rng() % 2) ranked.push_back({std::string(code), static_cast<double>(rng() % 5 + 1), {}});
    const auto p = prediction(static_cast<double>(rng() % 101) / 100.0);
    const auto first = build_query_key(ranked, p).serialize();
    std::shuffle(ranked.begin(), ranked.end(), rng);
    EXPECT_EQ(build_query_key(ranked, p).serialize(), first);
  }
}

// ---- retrieval -------------------------------------------------------------

TEST(RetrieveGuidance, RefinedNullPointerGuidance) {
  const auto key = build_query_key({{"IDN", 5, "CWE-476"}}, prediction(0.8));
  const auto& g = retrieve_guidance(library(), key);
  EXPECT_EQ(g.source, "CWE-476");
  EXPECT_NE(g.step(CotStep::kLogic).find("NULL"), std::string::npos);
}

TEST(RetrieveGuidance, TopCategoryWithoutRefinementUsesMajor) {
  const auto key = build_query_key({{"IDN", 5, {}}, {"MEM", 3, {}}}, prediction(0.8));
  EXPECT_EQ(retrieve_guidance(library(), key).source, "IDN");
}

TEST(RetrieveGuidance, EmptyKeyGivesUnt) {
  EXPECT_EQ(retrieve_guidance(library(), build_query_key({}, prediction(0.3))).source, "UNT");
}

TEST(RetrieveGuidance, PrunedLibraryFallsBack) {
  const auto pruned = CotLibrary::parse(small_library(kAllMajors));
  // Refinement absent from the pruned library: parent major.
  EXPECT_EQ(retrieve_guidance(pruned, build_query_key({{"IDN", 5, "CWE-476"}}, prediction(0.8))).source,
            "IDN");
  // Unknown category code: UNT.
  EXPECT_EQ(retrieve_guidance(pruned, build_query_key({{"ZZZ", 5, {}}}, prediction(0.8))).source, "UNT");
}

TEST(RetrieveGuidance, TotalAndPureOverRandomKeys) {
  std::vector<std::string> codes(kMajorCategories.begin(), kMajorCategories.end());
  for (const auto& n : library().nodes()) codes.push_back(n.code);
  codes.insert(codes.end(), {"CWE-1", "bogus", ""});
  std::vector<std::string> snapshot;
  for (const auto& n : library().nodes()) snapshot.push_back(n.code + n.guidance.source);

  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    staticscan::RankedCategories ranked;
    const auto n = rng() % 4;
    for (std::size_t i = 0; i < n; ++i)
      ranked.push_back({codes[rng() % codes.size()], static_cast<double>(rng() % 9 + 1),
                        rng() % 2 ? codes[rng() % codes.size()] : std::string()});
    const auto key = build_query_key(ranked, prediction(static_cast<double>(rng() % 11) / 10.0));
    const auto& a = retrieve_guidance(library(), key);
    const auto& b = retrieve_guidance(library(), key);
    EXPECT_EQ(&a, &b);
    for (const auto& s : a.steps) EXPECT_FALSE(s.empty());
  }
  std::vector<std::string> after;
  for (const auto& n : library().nodes()) after.push_back(n.code + n.guidance.source);
  EXPECT_EQ(after, snapshot);
}

TEST(SchemaCompleteness, EveryMappedCweAndRuleResolves) {
  const auto mapping = staticscan::ScanMapping::parse(defaults::scan_mapping_yaml());
  EXPECT_TRUE(mapping.unresolved(library()).empty());
  for (const auto& [cwe, code] : mapping.cwe_aliases) EXPECT_NE(library().find(code), nullptr) << cwe;
  for (const auto& [tool, rules] : mapping.rules)
    for (const auto& [rule, code] : rules) EXPECT_NE(library().find(code), nullptr) << rule;
}
