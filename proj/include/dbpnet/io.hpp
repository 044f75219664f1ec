#pragma once

// File plumbing shared by the dataset, checkpoint and report writers.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbpnet/errors.hpp"

namespace dbpnet::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for " + path.string());
  return ss.str();
}

/// Writes through a sibling temporary and renames it into place, so readers
/// only ever see the old file or the complete new one.
inline void write_text_atomic(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

inline json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

inline void write_json_atomic(const fs::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw IoError(where + ": cannot parse number '" + s + "'");
  return v;
}

/// Simple numeric table: header row plus rows of doubles.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw IoError("missing column '" + name + "'");
  }
};

inline std::string to_csv(const Table& t) {
  std::string s;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i) s += ',';
    s += t.columns[i];
  }
  s += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) s += ',';
      s += format_double(row[i]);
    }
    s += '\n';
  }
  return s;
}

inline Table parse_csv(const std::string& text, const std::string& where) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(where + ": empty CSV");
  t.columns = split(line, ',');
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line, ',');
    if (cells.size() != t.columns.size())
      throw IoError(where + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.columns.size()) + " cells, got " +
                    std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, where));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table read_csv(const fs::path& path) { return parse_csv(read_text(path), path.string()); }

inline void write_csv_atomic(const fs::path& path, const Table& t) {
  write_text_atomic(path, to_csv(t));
}

/// Table with string cells, for reports that mix names and numbers.
struct TextTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw IoError("missing column '" + name + "'");
  }
};

inline std::string to_csv(const TextTable& t) {
  std::string s;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += ',';
      s += cells[i];
    }
    s += '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
  return s;
}

inline TextTable parse_text_csv(const std::string& text, const std::string& where) {
  TextTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw IoError(where + ": empty CSV");
  t.columns = split(line, ',');
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split(line, ',');
    if (cells.size() != t.columns.size()) throw IoError(where + ": ragged CSV row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline TextTable read_text_csv(const fs::path& path) { return parse_text_csv(read_text(path), path.string()); }

inline void write_csv_atomic(const fs::path& path, const TextTable& t) { write_text_atomic(path, to_csv(t)); }

}  // namespace dbpnet::io
