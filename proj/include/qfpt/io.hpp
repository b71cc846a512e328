#pragma once

// CSV and JSON output. Floats are written with 17 significant digits so
// every value round-trips exactly.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qfpt/error.hpp"
#include "qfpt/records.hpp"
#include "qfpt/sme.hpp"

namespace qfpt::io {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot open " + path.string() + " for writing");
  return out;
}

/// One header line, then one row per entry of `rows`.
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
}

/// trajectory_id,side,hit_time,censored with side 1 = upper, 2 = lower, 0 = none.
inline void write_hitting_csv(const std::filesystem::path& path, const std::vector<HittingRecord>& records) {
  auto out = open_output(path);
  out << "trajectory_id,side,hit_time,censored\n";
  for (const auto& r : records) {
    out << r.trajectory_id << ',' << static_cast<int>(r.side) << ',' << format_double(r.hit_time) << ','
        << (r.censored ? 1 : 0) << '\n';
  }
}

inline std::vector<HittingRecord> read_hitting_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "trajectory_id,side,hit_time,censored") throw DomainError(path.string() + ": unexpected header");
  std::vector<HittingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    is.imbue(std::locale::classic());
    HittingRecord r;
    int side = 0, censored = 0;
    char c1, c2, c3;
    if (!(is >> r.trajectory_id >> c1 >> side >> c2 >> r.hit_time >> c3 >> censored)) {
      throw DomainError(path.string() + ": malformed row '" + line + "'");
    }
    r.side = static_cast<ExitSide>(side);
    r.censored = censored != 0;
    out.push_back(r);
  }
  return out;
}

/// t,x,<observables...>
inline void write_trace_csv(const std::filesystem::path& path, const OverlapTrace& trace) {
  std::vector<std::string> header{"t", "x"};
  header.insert(header.end(), trace.names.begin(), trace.names.end());
  std::vector<std::vector<double>> rows;
  rows.reserve(trace.times.size());
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    std::vector<double> row{trace.times[i], trace.x[i]};
    for (const auto& series : trace.observables) row.push_back(series[i]);
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError("config " + path.string() + ": " + e.what());
  }
}

}  // namespace qfpt::io
