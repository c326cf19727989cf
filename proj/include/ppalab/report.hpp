#pragma once

// Run reports: named residual checks serialized as JSON with a stable key
// order, plus CSV tables for plot data. Serialization is deterministic so
// repeated runs with the same configuration compare byte for byte.

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace ppalab {

struct CheckRow {
  std::string check_id;
  std::string paper_anchor;
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct Report {
  std::string suite;
  std::vector<CheckRow> rows;

  // pass iff residual <= tolerance; a NaN residual never passes
  void add(std::string id, std::string anchor, double residual, double tolerance) {
    const bool ok = residual <= tolerance;
    rows.push_back(CheckRow{std::move(id), std::move(anchor), residual, tolerance, ok});
  }

  void append(const Report& other) {
    rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  }

  bool all_pass() const {
    for (const CheckRow& r : rows)
      if (!r.pass) return false;
    return true;
  }
};

inline nlohmann::ordered_json report_json(const Report& r) {
  nlohmann::ordered_json doc;
  doc["suite"] = r.suite;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const CheckRow& row : r.rows) {
    nlohmann::ordered_json j;
    j["check_id"] = row.check_id;
    j["paper_anchor"] = row.paper_anchor;
    j["residual"] = row.residual;
    j["tolerance"] = row.tolerance;
    j["pass"] = row.pass;
    checks.push_back(std::move(j));
  }
  doc["checks"] = std::move(checks);
  return doc;
}

inline std::string report_string(const Report& r) { return report_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// CSV tables: optional comment preamble, one header row, numeric rows.

struct CsvTable {
  std::vector<std::string> comments;  // emitted as "# ..." lines before the header
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

inline std::string csv_string(const CsvTable& t) {
  std::string out;
  for (const std::string& c : t.comments) out += "# " + c + "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ",";
    out += t.header[i];
  }
  out += "\n";
  for (const std::vector<double>& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += csv_number(row[i]);
    }
    out += "\n";
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace ppalab
