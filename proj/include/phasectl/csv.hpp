#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "phasectl/errors.hpp"

namespace phasectl {

// Locale-independent shortest round-trip formatting: parsing the result
// recovers the exact double, and identical runs produce identical bytes.
inline std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw SolverError("format_double: conversion failed");
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  auto [ptr, ec] = std::from_chars(first, last, x);
  while (ptr < last && (*ptr == ' ' || *ptr == '\t' || *ptr == '\r')) ++ptr;
  if (ec != std::errc() || ptr != last)
    throw ValidationError("csv: cannot parse number from '" + s + "'");
  return x;
}

// Writes content to a sibling temp file and renames it into place, so readers
// never observe a half-written payload and reruns replace files atomically.
inline void atomic_write_text(const std::filesystem::path& path,
                              const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw ValidationError("cannot move " + tmp.string() + " to " + path.string() +
                          ": " + ec.message());
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ValidationError("csv: missing column '" + name + "'");
  }
};

inline std::string to_csv(const CsvTable& t) {
  std::string out;
  out.reserve(t.rows.size() * 32 + 64);
  for (size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("csv: cannot open " + path.string());
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
      const size_t pos = s.find(',', start);
      if (pos == std::string::npos) {
        parts.push_back(s.substr(start));
        break;
      }
      parts.push_back(s.substr(start, pos - start));
      start = pos + 1;
    }
    if (!parts.empty() && !parts.back().empty() && parts.back().back() == '\r')
      parts.back().pop_back();
    return parts;
  };
  if (!std::getline(in, line))
    throw ValidationError("csv: " + path.string() + " is empty");
  t.header = split(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> parts = split(line);
    if (parts.size() != t.header.size())
      throw ValidationError("csv: " + path.string() + " line " +
                            std::to_string(lineno) + " has " +
                            std::to_string(parts.size()) + " fields, expected " +
                            std::to_string(t.header.size()));
    std::vector<double> row;
    row.reserve(parts.size());
    try {
      for (const std::string& p : parts) row.push_back(parse_double(p));
    } catch (const ValidationError& e) {
      throw ValidationError("csv: " + path.string() + " line " +
                            std::to_string(lineno) + ": " + e.what());
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace phasectl
