#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ptlab/config.hpp"
#include "ptlab/evaluation.hpp"

namespace ptlab {

/// Markdown: one row per method, base/new/HM columns per K (seed means),
/// then the per-seed HM means and any warnings. CSV: one line per run.
/// Output depends only on the report contents, never on timing.
std::string render_report(const EvalReport& report, ReportFormat format);

/// Writes the rendered report to `path`; throws IoError on failure.
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

/// Inverse of the CSV rendering. Throws FormatError on malformed input.
std::vector<RunResult> parse_report_csv(std::string_view text);

}  // namespace ptlab
