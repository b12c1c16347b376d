#include "dlap/taxonomy.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "dlap/error.hpp"

namespace dlap::taxonomy {

namespace {

constexpr std::string_view kSchema = "dlap-cot-library/1";

Error schema_error(const std::string& origin, const std::string& what) {
  return Error(ErrorCode::kSchema, origin + ": " + what);
}

std::string scalar(const YAML::Node& n, const char* key, const std::string& where,
                   const std::string& origin) {
  const auto v = n[key];
  if (!v || !v.IsScalar()) throw schema_error(origin, where + " lacks scalar \"" + key + "\"");
  return v.as<std::string>();
}

// Reads whatever steps are present; the caller decides about gaps.
std::array<std::optional<std::string>, kStepCount> read_steps(const YAML::Node& node,
                                                              const std::string& code,
                                                              const std::string& origin) {
  std::array<std::optional<std::string>, kStepCount> steps;
  const auto g = node["guidance"];
  if (!g) return steps;
  if (!g.IsMap()) throw schema_error(origin, "guidance of " + code + " must be a mapping");
  for (const auto& kv : g) {
    const auto key = kv.first.as<std::string>();
    auto it = std::find(kStepKeys.begin(), kStepKeys.end(), key);
    if (it == kStepKeys.end())
      throw schema_error(origin, "guidance of " + code + " has unknown step \"" + key + "\"");
    const auto text = kv.second.as<std::string>();
    for (const auto& ph : placeholders_in(text))
      if (std::find(kPlaceholders.begin(), kPlaceholders.end(), ph) == kPlaceholders.end())
        throw schema_error(origin, "guidance of " + code + " step " + key +
                                       " uses unknown placeholder {" + ph + "}");
    steps[static_cast<std::size_t>(it - kStepKeys.begin())] = text;
  }
  return steps;
}

std::vector<int> read_cwes(const YAML::Node& node, const std::string& code,
                           const std::string& origin) {
  std::vector<int> out;
  const auto c = node["cwe"];
  if (!c) return out;
  if (!c.IsSequence()) throw schema_error(origin, "cwe of " + code + " must be a list");
  for (const auto& v : c) {
    try {
      out.push_back(v.as<int>());
    } catch (const YAML::Exception&) {
      throw schema_error(origin, "cwe of " + code + " holds a non-integer entry");
    }
  }
  return out;
}

}  // namespace

bool is_major(std::string_view code) {
  return std::find(kMajorCategories.begin(), kMajorCategories.end(), code) !=
         kMajorCategories.end();
}

std::vector<std::string> placeholders_in(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string_view::npos) {
    const auto end = text.find('}', pos + 1);
    if (end == std::string_view::npos) break;
    const auto name = text.substr(pos + 1, end - pos - 1);
    const bool word = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
    if (word) out.emplace_back(name);
    pos = word ? end + 1 : pos + 1;
  }
  return out;
}

CotLibrary CotLibrary::parse(std::string_view text, const std::string& origin) {
  YAML::Node doc;
  try {
    doc = YAML::Load(std::string(text));
  } catch (const YAML::Exception& e) {
    throw Error(ErrorCode::kFormat, origin + ": " + e.what());
  }
  if (!doc.IsMap()) throw schema_error(origin, "library document must be a mapping");
  if (scalar(doc, "schema", "library", origin) != kSchema)
    throw schema_error(origin, "unsupported schema (expected " + std::string(kSchema) + ")");

  CotLibrary lib;
  lib.version_ = scalar(doc, "version", "library", origin);

  auto add_node = [&](TaxonomyNode node) {
    if (lib.by_code_.count(node.code))
      throw schema_error(origin, "duplicate node code " + node.code);
    for (int cwe : node.cwe_ids) {
      if (lib.by_cwe_.count(cwe))
        throw schema_error(origin, "CWE-" + std::to_string(cwe) + " is claimed by both " +
                                       lib.nodes_[lib.by_cwe_[cwe]].code + " and " + node.code);
      lib.by_cwe_[cwe] = lib.nodes_.size();
    }
    lib.by_code_[node.code] = lib.nodes_.size();
    lib.nodes_.push_back(std::move(node));
  };

  const auto majors = doc["categories"];
  if (!majors || !majors.IsSequence())
    throw schema_error(origin, "\"categories\" must list the major categories");
  for (const auto& m : majors) {
    TaxonomyNode node;
    node.code = scalar(m, "code", "category entry", origin);
    if (!is_major(node.code))
      throw schema_error(origin, "\"" + node.code + "\" is not a major category code");
    node.name = scalar(m, "name", node.code, origin);
    node.cwe_ids = read_cwes(m, node.code, origin);
    const auto steps = read_steps(m, node.code, origin);
    for (std::size_t s = 0; s < kStepCount; ++s) {
      if (!steps[s])
        throw schema_error(origin, "major category " + node.code + " lacks guidance step " +
                                       std::string(kStepKeys[s]));
      node.guidance.steps[s] = *steps[s];
    }
    node.guidance.source = node.code;
    add_node(std::move(node));
  }
  for (auto code : kMajorCategories)
    if (!lib.by_code_.count(code))
      throw schema_error(origin, "missing major category " + std::string(code));

  if (const auto subs = doc["subcategories"]) {
    if (!subs.IsSequence()) throw schema_error(origin, "\"subcategories\" must be a list");
    for (const auto& s : subs) {
      TaxonomyNode node;
      node.code = scalar(s, "code", "subcategory entry", origin);
      node.name = scalar(s, "name", node.code, origin);
      const auto parent = s["parent"];
      if (!parent || !parent.IsScalar() || !is_major(parent.as<std::string>()))
        throw schema_error(origin, "orphan subcategory " + node.code +
                                       ": parent must be one of the six major categories");
      node.parent = parent.as<std::string>();
      node.cwe_ids = read_cwes(s, node.code, origin);
      const auto steps = read_steps(s, node.code, origin);
      const auto& inherited = lib.nodes_[lib.by_code_.at(*node.parent)].guidance;
      bool own = false;
      for (std::size_t i = 0; i < kStepCount; ++i) {
        own = own || steps[i].has_value();
        node.guidance.steps[i] = steps[i] ? *steps[i] : inherited.steps[i];
      }
      node.guidance.source = own ? node.code : inherited.source;
      add_node(std::move(node));
    }
  }
  return lib;
}

CotLibrary CotLibrary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open library " + path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse(text, path);
}

const TaxonomyNode* CotLibrary::find(std::string_view code) const {
  auto it = by_code_.find(code);
  return it == by_code_.end() ? nullptr : &nodes_[it->second];
}

const TaxonomyNode* CotLibrary::find_by_cwe(int cwe) const {
  auto it = by_cwe_.find(cwe);
  return it == by_cwe_.end() ? nullptr : &nodes_[it->second];
}

std::string CotLibrary::major_of(std::string_view code) const {
  const auto* node = find(code);
  if (node == nullptr) return std::string(kUnknownCategory);
  return node->parent ? *node->parent : node->code;
}

std::string QueryKey::serialize() const {
  std::string out = "{categories:[";
  bool refined = false;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (i) out += ',';
    out += categories[i].code;
    refined = refined || !categories[i].refinement.empty();
  }
  out += "], ";
  if (refined) {
    out += "refine:[";
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (i) out += ',';
      out += categories[i].refinement.empty() ? "-" : categories[i].refinement;
    }
    out += "], ";
  }
  out += dl_vulnerable ? "dl:vulnerable}" : "dl:benign}";
  return out;
}

QueryKey build_query_key(staticscan::RankedCategories ranked,
                         const modelplug::ModelPrediction& prediction) {
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const staticscan::RankedCategory& a, const staticscan::RankedCategory& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.code < b.code;
                   });
  return QueryKey{std::move(ranked), prediction.vulnerable, prediction.probability};
}

const CotGuidance& retrieve_guidance(const CotLibrary& library, const QueryKey& key) {
  if (!key.categories.empty()) {
    const auto& top = key.categories.front();
    if (!top.refinement.empty())
      if (const auto* node = library.find(top.refinement)) return node->guidance;
    if (const auto* node = library.find(top.code)) return node->guidance;
    // Unknown subcategory code used as a category: fall back to its major.
    if (const auto* node = library.find(library.major_of(top.code))) return node->guidance;
  }
  return library.find(kUnknownCategory)->guidance;
}

}  // namespace dlap::taxonomy
