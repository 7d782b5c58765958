#pragma once

// Report writers: RFC-4180 CSV, JSON with sorted keys, binary field dumps.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "gpk/error.hpp"
#include "gpk/grid.hpp"

namespace gpk::io {

/// nlohmann::json keeps object keys in a std::map, so dumps are sorted.
using Json = nlohmann::json;

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw InvariantViolation("csv: row has the wrong number of fields");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) text_ += ',';
      text_ += csv_escape(fields[i]);
    }
    text_ += "\r\n";
  }
  void numbers(const std::vector<double>& values) {
    std::vector<std::string> f;
    for (double v : values) f.push_back(format_number(v));
    row(f);
  }

  const std::string& str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

/// Minimal RFC-4180 reader (quoted fields, doubled quotes, CRLF or LF).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ConfigError("csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// Field dump layout (little-endian):
//   "GPKF" | u32 version = 1 | i32 dim | i32 points | f64 box_length | f64 time |
//   u64 count | count x (f64 re, f64 im)
inline constexpr char kFieldMagic[4] = {'G', 'P', 'K', 'F'};

struct FieldDump {
  GridSpec grid;
  double time = 0.0;
  Field values;
};

inline void write_field(const std::filesystem::path& path, const GridSpec& g, double time, const Field& values) {
  if (values.size() != g.size()) throw InvariantViolation("field dump: value count does not match the grid");
  std::string buf(kFieldMagic, 4);
  auto put = [&](const auto& v) { buf.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(std::uint32_t{1});
  put(std::int32_t{g.dim});
  put(std::int32_t{g.points});
  put(g.box_length);
  put(time);
  put(static_cast<std::uint64_t>(values.size()));
  buf.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(cplx));
  write_text(path, buf);
}

inline FieldDump read_field(const std::filesystem::path& path) {
  const std::string buf = read_text(path);
  std::size_t pos = 0;
  auto take = [&](auto& v) {
    if (pos + sizeof v > buf.size()) throw ConfigError("field dump " + path.string() + " is truncated");
    std::memcpy(&v, buf.data() + pos, sizeof v);
    pos += sizeof v;
  };
  if (buf.size() < 4 || buf.compare(0, 4, std::string(kFieldMagic, 4)) != 0)
    throw ConfigError(path.string() + " is not a field dump (bad magic)");
  pos = 4;
  std::uint32_t version = 0;
  std::int32_t dim = 0, points = 0;
  std::uint64_t count = 0;
  FieldDump out;
  take(version);
  if (version != 1) throw ConfigError("field dump " + path.string() + ": unsupported version");
  take(dim);
  take(points);
  take(out.grid.box_length);
  take(out.time);
  take(count);
  out.grid.dim = dim;
  out.grid.points = points;
  out.grid.validate();
  if (count != out.grid.size() || buf.size() - pos != count * sizeof(cplx))
    throw ConfigError("field dump " + path.string() + ": payload size does not match the header");
  out.values.resize(count);
  std::memcpy(out.values.data(), buf.data() + pos, count * sizeof(cplx));
  return out;
}

}  // namespace gpk::io
