// CSV serialization of iterate traces.
#pragma once

#include "driftopt/core.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace driftopt {

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t row) {
  if (cell.empty()) throw ParseError("trace row " + std::to_string(row) + " has an empty field");
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size()) {
    if (cell == "nan" || cell == "-nan") return std::numeric_limits<double>::quiet_NaN();
    if (cell == "inf") return kInf;
    if (cell == "-inf") return -kInf;
    throw ParseError("trace row " + std::to_string(row) + ": '" + cell + "' is not a number");
  }
  return v;
}

}  // namespace detail

/// Columns: t, f_avg, [f_err], g_1..g_m, qnorm, [lambda_dist, dual_gap]. The
/// bracketed columns appear only when f_star is given.
inline void write_trace_csv(std::ostream& os, const IterateTrace& trace, Index m,
                            std::optional<double> f_star = std::nullopt) {
  os << "t,f_avg";
  if (f_star) os << ",f_err";
  for (Index k = 0; k < m; ++k) os << ",g_" << (k + 1);
  os << ",qnorm";
  if (f_star) os << ",lambda_dist,dual_gap";
  os << '\n';
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& s : trace.samples()) {
    require_size(s.g_avg.size(), m, "trace constraint values");
    os << s.t << ',' << detail::fmt17(s.f_avg);
    if (f_star) os << ',' << detail::fmt17(std::abs(s.f_avg - *f_star));
    for (Index k = 0; k < m; ++k) os << ',' << detail::fmt17(s.g_avg[k]);
    os << ',' << detail::fmt17(s.qnorm);
    if (f_star) {
      os << ',' << detail::fmt17(s.lambda_dist.value_or(nan)) << ','
         << detail::fmt17(s.dual_gap.value_or(nan));
    }
    os << '\n';
  }
}

struct LoadedTrace {
  IterateTrace trace;
  Index m = 0;
  std::vector<std::string> columns;
  std::vector<double> f_err;  // empty when the file has no f_err column
};

/// Reads a trace written by write_trace_csv. Any row that does not end in a
/// newline or has the wrong number of fields is rejected as truncated.
inline LoadedTrace read_trace_csv(std::istream& is) {
  const std::string text{std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
  if (text.empty()) throw ParseError("trace file is empty");
  if (text.back() != '\n') throw ParseError("trace file is truncated (no final newline)");

  std::stringstream in(text);
  std::string line;
  std::getline(in, line);
  LoadedTrace out;
  out.columns = detail::split_csv(line);
  const auto& cols = out.columns;
  auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto it = find("t");
  const auto ifa = find("f_avg");
  const auto iq = find("qnorm");
  if (!it || !ifa || !iq) throw ParseError("trace header must contain t, f_avg and qnorm");
  std::vector<std::size_t> ig;
  while (auto k = find("g_" + std::to_string(ig.size() + 1))) ig.push_back(*k);
  out.m = static_cast<Index>(ig.size());
  const auto ife = find("f_err");
  const auto ild = find("lambda_dist");
  const auto idg = find("dual_gap");

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) throw ParseError("trace row " + std::to_string(row) + " is empty");
    const auto cells = detail::split_csv(line);
    if (cells.size() != cols.size()) {
      throw ParseError("trace row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(cols.size()));
    }
    TraceSample s;
    const double t = detail::parse_cell(cells[*it], row);
    if (!(t >= 1.0) || t != std::floor(t)) {
      throw ParseError("trace row " + std::to_string(row) + ": t must be a positive integer");
    }
    s.t = static_cast<std::int64_t>(t);
    s.f_avg = detail::parse_cell(cells[*ifa], row);
    s.g_avg.resize(out.m);
    for (Index k = 0; k < out.m; ++k) s.g_avg[k] = detail::parse_cell(cells[ig[static_cast<std::size_t>(k)]], row);
    s.qnorm = detail::parse_cell(cells[*iq], row);
    if (!(s.qnorm >= 0.0)) throw ParseError("trace row " + std::to_string(row) + ": qnorm is negative");
    if (ild) {
      const double v = detail::parse_cell(cells[*ild], row);
      if (!std::isnan(v)) s.lambda_dist = v;
    }
    if (idg) {
      const double v = detail::parse_cell(cells[*idg], row);
      if (!std::isnan(v)) s.dual_gap = v;
    }
    if (ife) out.f_err.push_back(detail::parse_cell(cells[*ife], row));
    try {
      out.trace.append(std::move(s));
    } catch (const DomainError& e) {
      throw ParseError("trace row " + std::to_string(row) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace driftopt
