#pragma once

#include <string_view>

namespace dlap::defaults {

// Shipped data files, compiled in so a bare install works without paths.
std::string_view cot_library_yaml();
std::string_view scan_mapping_yaml();

}  // namespace dlap::defaults
