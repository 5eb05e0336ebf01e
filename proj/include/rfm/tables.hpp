#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/feature.hpp"
#include "rfm/io.hpp"
#include "rfm/monitoring.hpp"

namespace rfm {

/// Feature vector tagged with the cloud it came from.
struct FeatureRow {
  std::string id;
  FeatureVector features;
};

struct DecisionRow {
  std::size_t t = 0;
  std::string id;
  double statistic = 0.0;
  bool alarm = false;
};

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote", lineno);
  out.push_back(std::move(cur));
  return out;
}

// Non-empty lines with their 1-based line numbers.
inline std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n)
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.emplace_back(n, line);
  return out;
}

inline double csv_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  if (!parse_double(s, v)) throw ParseError("not a number: '" + s + "'", lineno);
  return v;
}

}  // namespace detail

// id,backend,f1..fk with full round-trip precision.
inline std::string features_csv(const std::vector<FeatureRow>& rows) {
  std::size_t k = rows.empty() ? 0 : rows[0].features.size();
  std::ostringstream out;
  out << "id,backend";
  for (std::size_t i = 1; i <= k; ++i) out << ",f" << i;
  out << '\n';
  for (const auto& r : rows) {
    if (r.features.size() != k) throw InvalidArgument("features_csv: rows differ in length");
    out << detail::csv_field(r.id) << ',' << to_string(r.features.backend);
    for (std::size_t i = 0; i < k; ++i) out << ',' << format_double(r.features[i]);
    out << '\n';
  }
  return out.str();
}

inline std::vector<FeatureRow> parse_features_csv(const std::string& text) {
  const auto lines = detail::csv_lines(text);
  if (lines.empty()) throw ParseError("empty feature file", 1);
  const auto header = detail::split_csv_line(lines[0].second, lines[0].first);
  if (header.size() < 3 || header[0] != "id" || header[1] != "backend")
    throw ParseError("feature header must start with id,backend and list at least one value", lines[0].first);
  const std::size_t k = header.size() - 2;
  std::vector<FeatureRow> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto& [n, line] = lines[l];
    const auto f = detail::split_csv_line(line, n);
    if (f.size() != k + 2)
      throw ParseError("expected " + std::to_string(k + 2) + " fields, found " + std::to_string(f.size()), n);
    FeatureRow r;
    r.id = f[0];
    try {
      r.features.backend = backend_from_string(f[1]);
    } catch (const InvalidArgument& e) {
      throw ParseError(e.what(), n);
    }
    if (!rows.empty() && r.features.backend != rows[0].features.backend) throw ParseError("mixed backends", n);
    r.features.values.resize(static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) r.features.values[static_cast<Eigen::Index>(i)] = detail::csv_double(f[i + 2], n);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<FeatureVector> feature_vectors(const std::vector<FeatureRow>& rows) {
  std::vector<FeatureVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.features);
  return out;
}

inline std::string decisions_csv(const std::vector<DecisionRow>& rows) {
  std::ostringstream out;
  out << "t,id,statistic,alarm\n";
  for (const auto& r : rows)
    out << r.t << ',' << detail::csv_field(r.id) << ',' << format_double(r.statistic) << ',' << (r.alarm ? 1 : 0)
        << '\n';
  return out.str();
}

inline std::vector<DecisionRow> parse_decisions_csv(const std::string& text) {
  const auto lines = detail::csv_lines(text);
  if (lines.empty() || lines[0].second != "t,id,statistic,alarm")
    throw ParseError("decision header must be t,id,statistic,alarm", lines.empty() ? 1 : lines[0].first);
  std::vector<DecisionRow> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    const auto& [n, line] = lines[l];
    const auto f = detail::split_csv_line(line, n);
    if (f.size() != 4) throw ParseError("expected 4 fields", n);
    DecisionRow r;
    const double t = detail::csv_double(f[0], n);
    if (t < 1 || t != std::floor(t)) throw ParseError("t must be a positive integer", n);
    r.t = static_cast<std::size_t>(t);
    r.id = f[1];
    r.statistic = detail::csv_double(f[2], n);
    if (f[3] != "0" && f[3] != "1") throw ParseError("alarm must be 0 or 1", n);
    r.alarm = f[3] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rfm
