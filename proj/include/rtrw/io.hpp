#pragma once

// Result tables and run reports: CSV and JSONL renderings of result rows
// (stable schema, exact double round-trip) and a Markdown summary with
// pass/fail verdicts. The wall-time column is last so that reruns with the
// same seed agree byte-for-byte on everything before it.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtrw/config.hpp"

namespace rtrw {

struct ResultRow {
  std::string experiment;  // recipe name
  std::string params;      // ';'-separated key=value pairs, e.g. "beta=2;l=1"
  std::string statistic;
  double value = 0.0;
  double stderr_ = 0.0;
  long n_samples = 0;
  std::uint64_t seed = 0;
  double wall_s = 0.0;
};

// A single named verdict. `criterion` groups checks for reporting (0 means
// an internal consistency check not tied to a numbered group).
struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
};

inline bool all_passed(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

// --- numeric formatting -----------------------------------------------------

// Shortest-width exact decimal for doubles: %.17g round-trips every finite
// value through strtod.
inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_g17(const std::string& text) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double x = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw std::invalid_argument("not a number: '" + text + "'");
  return x;
}

// --- CSV ---------------------------------------------------------------------

inline const char* csv_header() {
  return "experiment,params,statistic,value,stderr,n_samples,seed,wall_s";
}

namespace detail {

inline void require_csv_safe(const std::string& field, const char* what) {
  for (char c : field)
    if (c == ',' || c == '"' || c == '\n' || c == '\r')
      throw std::invalid_argument(std::string(what) +
                                  " contains a character not allowed in CSV fields: " + field);
}

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x))
    throw std::invalid_argument(std::string(what) + " must be finite");
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline std::string render_csv_row(const ResultRow& r) {
  detail::require_csv_safe(r.experiment, "experiment");
  detail::require_csv_safe(r.params, "params");
  detail::require_csv_safe(r.statistic, "statistic");
  detail::require_finite(r.value, "value");
  detail::require_finite(r.stderr_, "stderr");
  std::ostringstream out;
  out << r.experiment << ',' << r.params << ',' << r.statistic << ','
      << format_g17(r.value) << ',' << format_g17(r.stderr_) << ',' << r.n_samples << ','
      << r.seed << ',' << format_g17(r.wall_s);
  return out.str();
}

inline std::string render_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  out << csv_header() << '\n';
  for (const auto& r : rows) out << render_csv_row(r) << '\n';
  return out.str();
}

inline std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != csv_header())
    throw std::invalid_argument("missing or unexpected CSV header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8)
      throw std::invalid_argument("CSV row does not have 8 fields: " + line);
    ResultRow r;
    r.experiment = f[0];
    r.params = f[1];
    r.statistic = f[2];
    r.value = parse_g17(f[3]);
    r.stderr_ = parse_g17(f[4]);
    r.n_samples = std::strtol(f[5].c_str(), nullptr, 10);
    r.seed = std::strtoull(f[6].c_str(), nullptr, 10);
    r.wall_s = parse_g17(f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// Drops the final (wall-time) column of every line; what remains must be
// byte-identical across reruns with the same seed and parameters.
inline std::string strip_wall_column(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.rfind(',');
    out << (pos == std::string::npos ? line : line.substr(0, pos)) << '\n';
  }
  return out.str();
}

// --- JSONL -------------------------------------------------------------------

inline nlohmann::json row_to_json(const ResultRow& r) {
  return nlohmann::json{{"experiment", r.experiment}, {"params", r.params},
                        {"statistic", r.statistic},   {"value", r.value},
                        {"stderr", r.stderr_},        {"n_samples", r.n_samples},
                        {"seed", r.seed},             {"wall_s", r.wall_s}};
}

inline std::string render_jsonl(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) out << row_to_json(r).dump() << '\n';
  return out.str();
}

inline std::vector<ResultRow> parse_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ResultRow r;
    r.experiment = j.at("experiment").get<std::string>();
    r.params = j.at("params").get<std::string>();
    r.statistic = j.at("statistic").get<std::string>();
    r.value = j.at("value").get<double>();
    r.stderr_ = j.at("stderr").get<double>();
    r.n_samples = j.at("n_samples").get<long>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.wall_s = j.at("wall_s").get<double>();
    rows.push_back(std::move(r));
  }
  return rows;
}

// --- summary -------------------------------------------------------------------

inline std::string render_summary(const RunConfig& cfg, const nlohmann::json& params,
                                  const std::vector<ResultRow>& rows,
                                  const std::vector<CheckResult>& checks) {
  std::ostringstream out;
  out << "# rtrw run: " << cfg.recipe << "\n\n";
  out << "- seed: " << cfg.seed << "\n";
  out << "- workers: " << (cfg.workers == 0 ? std::string("all") : std::to_string(cfg.workers))
      << "\n";
  out << "- parameters: `" << params.dump() << "`\n\n";
  out << "## Checks\n\n";
  for (const auto& c : checks) {
    out << "- " << (c.passed ? "**PASS**" : "**FAIL**") << " — " << c.name;
    if (!c.detail.empty()) out << " (" << c.detail << ")";
    out << "\n";
  }
  out << "\nOverall: " << (all_passed(checks) ? "PASS" : "FAIL") << "\n\n";
  out << "## Results\n\n";
  out << "| statistic | params | value | stderr | n |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    char value_buf[64], se_buf[64];
    std::snprintf(value_buf, sizeof value_buf, "%.6g", r.value);
    std::snprintf(se_buf, sizeof se_buf, "%.3g", r.stderr_);
    out << "| " << r.statistic << " | " << r.params << " | " << value_buf << " | " << se_buf
        << " | " << r.n_samples << " |\n";
  }
  return out.str();
}

// --- files ---------------------------------------------------------------------

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace rtrw
