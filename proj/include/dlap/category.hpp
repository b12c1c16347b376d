#pragma once

#include <string>
#include <vector>

namespace dlap::staticscan {

/// One entry of a top-K category ranking. `refinement` names the
/// best-scoring subcategory node under `code`, empty when none scored.
struct RankedCategory {
  std::string code;
  double score = 0.0;
  std::string refinement;

  friend bool operator==(const RankedCategory&, const RankedCategory&) = default;
};

/// Descending by score, ties by code ascending.
using RankedCategories = std::vector<RankedCategory>;

}  // namespace dlap::staticscan
