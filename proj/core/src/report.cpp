#include "ptlab/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ptlab/errors.hpp"

namespace ptlab {
namespace {

constexpr std::string_view kCsvHeader = "method,K,seed,base_acc,new_acc,hm";

std::string fixed(double v, int digits, std::string_view missing) {
  if (std::isnan(v)) return std::string(missing);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pct(double v) { return fixed(100.0 * v, 2, "-"); }

std::string render_markdown(const EvalReport& report) {
  const auto shots = report.shots();
  const auto seeds = report.seeds();
  std::ostringstream out;
  out << "# " << report.title << "\n\n";
  out << "Accuracy (%) averaged over seeds";
  for (std::size_t i = 0; i < seeds.size(); ++i) out << (i == 0 ? " " : ", ") << seeds[i];
  out << ". HM is the harmonic mean of the averaged base and new accuracies.\n\n";

  out << "| Method |";
  for (auto k : shots) out << " K=" << k << " Base | K=" << k << " New | K=" << k << " HM |";
  out << "\n|---|";
  for (std::size_t i = 0; i < shots.size(); ++i) out << "---:|---:|---:|";
  out << "\n";
  for (const auto& m : report.methods()) {
    out << "| " << m << " |";
    for (auto k : shots) {
      const auto& r = report.row(m, k);
      out << ' ' << pct(r.base_acc) << " | " << pct(r.new_acc) << " | " << pct(r.hm) << " |";
    }
    out << "\n";
  }

  out << "\nMean of per-seed HM (%):\n\n| Method |";
  for (auto k : shots) out << " K=" << k << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < shots.size(); ++i) out << "---:|";
  out << "\n";
  for (const auto& m : report.methods()) {
    out << "| " << m << " |";
    for (auto k : shots) out << ' ' << pct(report.row(m, k).mean_seed_hm) << " |";
    out << "\n";
  }

  if (!report.warnings.empty()) {
    out << "\nWarnings:\n\n";
    for (const auto& w : report.warnings) out << "- " << w << "\n";
  }
  return out.str();
}

std::string render_csv(const EvalReport& report) {
  std::ostringstream out;
  out << kCsvHeader << "\n";
  for (const auto& r : report.runs) {
    out << r.method << ',' << r.shots << ',' << r.seed << ',' << fixed(r.base_acc, 4, "") << ','
        << fixed(r.new_acc, 4, "") << ',' << fixed(r.hm, 4, "") << "\n";
  }
  return out.str();
}

double parse_field(const std::string& s) {
  if (s.empty()) return std::nan("");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("bad number in report: '" + s + "'");
  }
  if (used != s.size()) throw FormatError("bad number in report: '" + s + "'");
  return v;
}

std::uint64_t parse_count(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("bad integer in report: '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  return format == ReportFormat::csv ? render_csv(report) : render_markdown(report);
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << render_report(report, format);
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<RunResult> parse_report_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("missing report header");
  std::vector<RunResult> runs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 6) throw FormatError("report line has " + std::to_string(f.size()) + " fields");
    runs.push_back(RunResult{f[0], static_cast<std::size_t>(parse_count(f[1])), parse_count(f[2]),
                             parse_field(f[3]), parse_field(f[4]), parse_field(f[5])});
  }
  return runs;
}

}  // namespace ptlab
