#pragma once

// JSON run reports. Every command emits one report object:
//
//   {
//     "schema_version": "1.0.0",
//     "command":      "<subcommand>",
//     "config":       { echo of every effective setting },
//     "results":      { command-specific numbers, arrays of plain doubles },
//     "diagnostics":  { effective sample sizes, acceptance rates, error
//                       estimates, warnings },
//     "provenance":   { "seed", "threads", "wall_ms", "rng" }
//   }
//
// The numeric payload is the report without "provenance": identical configs
// and seeds must reproduce it byte for byte at any worker count, so nothing
// time- or machine-dependent may live outside the provenance block.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dlnk/errors.hpp"
#include "dlnk/linalg.hpp"

namespace dlnk {

using Json = nlohmann::json;

inline constexpr const char* kReportSchemaVersion = "1.0.0";

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json to_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (const double x : v) a.push_back(x);
  return a;
}

struct ReportTimer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();

  double wall_ms() const {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  }
};

inline Json make_report(const std::string& command, Json config, Json results,
                        Json diagnostics, std::uint64_t seed, int threads,
                        double wall_ms) {
  Json report;
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = command;
  report["config"] = std::move(config);
  report["results"] = std::move(results);
  report["diagnostics"] = std::move(diagnostics);
  report["provenance"] = {
      {"seed", seed},
      {"threads", threads},
      {"wall_ms", wall_ms},
      {"rng", "philox4x32-10 counter streams keyed by seed/stream/substream"},
  };
  return report;
}

// The deterministic part of a report: everything except "provenance".
// nlohmann::json keeps object keys sorted and prints doubles in shortest
// round-trip form, so equal numbers serialize to equal bytes.
inline std::string payload_string(const Json& report) {
  Json p = report;
  p.erase("provenance");
  return p.dump(2);
}

inline void write_report(const Json& report, const std::string& out_path,
                         std::ostream& fallback) {
  const std::string text = report.dump(2);
  if (out_path.empty()) {
    fallback << text << '\n';
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + out_path);
  out << text << '\n';
  if (!out) throw ConfigError("failed writing output file: " + out_path);
}

}  // namespace dlnk
