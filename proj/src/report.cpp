#include "dlap/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "dlap/error.hpp"

namespace dlap::eval {

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
  // "-0.0" would make CSV and markdown disagree with a naive reader.
  return std::string(buf) == "-0.0" ? "0.0" : buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out;
}

}  // namespace

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  if (s == "csv") return ReportFormat::kCsv;
  throw Error(ErrorCode::kInvalidArgument, "unknown report format \"" + std::string(s) + "\"");
}

std::vector<ReportRow> aggregate(const std::vector<SampleResult>& results,
                                 bool unparseable_as_positive) {
  std::map<std::pair<std::string, std::string>, std::vector<SampleResult>> groups;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> seen;
  for (const auto& r : results) {
    const auto key = std::make_pair(r.mode, r.project);
    if (!seen[key].insert(r.id).second)
      throw Error(ErrorCode::kInvalidArgument,
                  "sample \"" + r.id + "\" appears twice for framework " + r.mode);
    groups[key].push_back(r);
  }
  std::vector<ReportRow> rows;
  for (const auto& [key, group] : groups)
    rows.push_back({key.first, key.second, score_results(group, unparseable_as_positive)});
  return rows;
}

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format) {
  std::string out;
  if (format == ReportFormat::kCsv) {
    out = "framework,project,precision_pct,recall_pct,f1_pct,fpr_pct,mcc_pct,unparseable_count\n";
    for (const auto& row : rows) {
      const auto& m = row.metrics;
      out += csv_field(row.framework) + "," + csv_field(row.project) + "," + pct(m.precision) + "," +
             pct(m.recall) + "," + pct(m.f1) + "," + pct(m.fpr) + "," + pct(m.mcc) + "," +
             std::to_string(m.unparseable) + "\n";
    }
    return out;
  }
  out = "| Framework | Project | P_vul (%) | R_vul (%) | F1 (%) | FPR (%) | MCC (%) | Unparseable |\n";
  out += "|---|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    out += "| " + md_cell(row.framework) + " | " + md_cell(row.project) + " | " + pct(m.precision) +
           " | " + pct(m.recall) + " | " + pct(m.f1) + " | " + pct(m.fpr) + " | " + pct(m.mcc) +
           " | " + std::to_string(m.unparseable) + " |\n";
  }
  bool header = false;
  for (const auto& row : rows) {
    for (const auto& note : row.metrics.notes) {
      if (!header) {
        out += "\nNotes:\n";
        header = true;
      }
      out += "- " + row.framework + "/" + row.project + ": " + note + "\n";
    }
  }
  return out;
}

std::vector<SampleResult> load_results(const std::vector<std::string>& paths) {
  if (paths.empty()) throw Error(ErrorCode::kInvalidArgument, "no result files given");
  std::vector<SampleResult> all;
  for (const auto& p : paths) {
    std::filesystem::path path(p);
    if (std::filesystem::is_directory(path)) path /= "results.jsonl";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    auto part = results_from_jsonl(text, path.string());
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

}  // namespace dlap::eval
