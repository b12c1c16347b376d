#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dlap/pipeline.hpp"

namespace dlap::eval {

enum class ReportFormat { kMarkdown, kCsv };

ReportFormat report_format_from_string(std::string_view s);

struct ReportRow {
  std::string framework;
  std::string project;
  MetricsReport metrics;
};

/// Groups results by (prompt mode, project) and scores each group. Rows come
/// out sorted by framework, then project.
std::vector<ReportRow> aggregate(const std::vector<SampleResult>& results,
                                 bool unparseable_as_positive);

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format);

/// Accepts results.jsonl files or run directories containing one.
std::vector<SampleResult> load_results(const std::vector<std::string>& paths);

}  // namespace dlap::eval
