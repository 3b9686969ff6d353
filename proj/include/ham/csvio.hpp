#pragma once
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/trace.hpp"

namespace ham {

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One row per cut: h, causal, anticausal, line_c, line_a, A_c, A_a, d.
// A partial trace drops the missing mode's columns and says so in a comment.
inline std::string export_csv(const TraceFile& t) {
  const TraceAnalytics a = analyze_trace(t);
  const std::size_t H = t.horizon;
  std::ostringstream out;

  const bool has_c = t.causal.has_value(), has_a = t.anticausal.has_value();
  if (!has_c || !has_a)
    out << "# " << (has_c ? "anticausal" : "causal") << " mode missing; columns "
        << (has_c ? "anticausal,line_a,A_a,d" : "causal,line_c,A_c,d") << " omitted\n";

  out << "h";
  if (has_c) out << ",causal";
  if (has_a) out << ",anticausal";
  if (has_c) out << ",line_c";
  if (has_a) out << ",line_a";
  if (has_c) out << ",A_c";
  if (has_a) out << ",A_a";
  if (has_c && has_a) out << ",d";
  out << "\n";

  for (std::size_t h = 0; h <= H; ++h) {
    out << h;
    if (has_c) out << ',' << fmt_full(t.causal->overall[h]);
    if (has_a) out << ',' << fmt_full(t.anticausal->overall[h]);
    if (has_c) out << ',' << fmt_full(a.causal_area.line.at(double(h)));
    if (has_a) out << ',' << fmt_full(a.anticausal_area.line.at(double(h)));
    if (has_c) out << ',' << fmt_full(a.causal_area.values[h]);
    if (has_a) out << ',' << fmt_full(a.anticausal_area.values[h]);
    if (has_c && has_a) out << ',' << fmt_full(a.difference.values[h]);
    out << "\n";
  }
  return out.str();
}

// Reads back the curve columns of an exported file (round-trip checks and
// external spreadsheet reuse). Returns column name -> values.
inline std::vector<std::pair<std::string, std::vector<double>>> import_csv_columns(
    const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::string, std::vector<double>>> cols;
  bool header_done = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(row, cell, ',')) {
      if (!header_done) {
        cols.emplace_back(cell, std::vector<double>{});
      } else {
        if (i >= cols.size()) throw std::runtime_error("csv import: ragged row");
        cols[i].second.push_back(std::stod(cell));
      }
      ++i;
    }
    header_done = true;
  }
  return cols;
}

}  // namespace ham
