#pragma once

// Experiment configuration: an INI file with one section per pipeline stage.
//
//   [potential]  spec = square-well:8,1 | gaussian:s[,w] | zero | file:<path>
//                r_max, points
//   [grid]       dim, points, box_length, dt, t_final, snapshot_stride
//   [datum]      kind = gaussian | plane | constant | file; sigma, center, momentum,
//                modes, file
//   [sweep]      N (comma list), t_star, dt
//   [kernels]    N, t, kernel_points, column_stride
//   [fock]       h, v, g, phi0, kappa, times, N, extra_shells, hartree_dt
//   [cancellation] potential, modes, N, spacing, n_max
//   [output]     dir
//   [run]        seed
//
// Relative paths are resolved against the directory of the config file.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpk/error.hpp"
#include "gpk/fock.hpp"
#include "gpk/grid.hpp"
#include "gpk/io.hpp"

namespace gpk {

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

inline double to_double(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field + ": expected a number, got '" + text + "'");
  }
}

/// "a" or "a:b" meaning a + ib.
inline fock::cplx to_complex(const std::string& field, const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) return to_double(field, text);
  return {to_double(field, trim(text.substr(0, colon))), to_double(field, trim(text.substr(colon + 1)))};
}

}  // namespace config_detail

/// Typed access to one INI file, with errors naming "section.key".
class ConfigFile {
 public:
  static ConfigFile load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    ConfigFile c;
    c.path_ = path;
    c.base_ = std::filesystem::absolute(path).parent_path();
    c.text_ = io::read_text(path);
    try {
      std::istringstream in(c.text_);
      boost::property_tree::ini_parser::read_ini(in, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(path.string() + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    return c;
  }

  static ConfigFile from_string(const std::string& text, const std::filesystem::path& base = ".") {
    ConfigFile c;
    c.path_ = "<string>";
    c.base_ = std::filesystem::absolute(base);
    c.text_ = text;
    try {
      std::istringstream in(text);
      boost::property_tree::ini_parser::read_ini(in, c.tree_);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    return c;
  }

  bool has_section(const std::string& s) const { return tree_.get_child_optional(s).has_value(); }

  std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return config_detail::trim(*v);
  }

  std::string str(const std::string& key, const std::string& fallback) const {
    return raw(key).value_or(fallback);
  }
  std::string require(const std::string& key) const {
    auto v = raw(key);
    if (!v || v->empty()) throw ConfigError(location() + ": missing required field " + key);
    return *v;
  }
  double num(const std::string& key, double fallback) const {
    auto v = raw(key);
    return v ? config_detail::to_double(where(key), *v) : fallback;
  }
  int integer(const std::string& key, int fallback) const {
    const double v = num(key, fallback);
    if (v != std::floor(v)) throw ConfigError(where(key) + ": expected an integer");
    return static_cast<int>(v);
  }
  bool flag(const std::string& key, bool fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError(where(key) + ": expected true or false");
  }
  std::vector<double> list(const std::string& key, std::vector<double> fallback) const {
    auto v = raw(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& item : config_detail::split(*v, ','))
      if (!item.empty()) out.push_back(config_detail::to_double(where(key), item));
    return out;
  }
  std::vector<fock::cplx> complex_list(const std::string& key) const {
    std::vector<fock::cplx> out;
    for (const auto& item : config_detail::split(require(key), ','))
      out.push_back(config_detail::to_complex(where(key), item));
    return out;
  }
  /// Rows separated by ';', entries by ','.
  fock::Mat matrix(const std::string& key) const {
    const auto rows = config_detail::split(require(key), ';');
    fock::Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto cols = config_detail::split(rows[i], ',');
      if (cols.size() != rows.size()) throw ConfigError(where(key) + ": matrix must be square");
      for (std::size_t j = 0; j < cols.size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = config_detail::to_complex(where(key), cols[j]);
    }
    return m;
  }

  /// Path field resolved against the config directory; must exist.
  std::filesystem::path existing_path(const std::string& key, const std::string& text) const {
    std::filesystem::path p(text);
    if (p.is_relative()) p = base_ / p;
    if (!std::filesystem::exists(p))
      throw ConfigError(location() + ": field " + key + " refers to a missing file: " + p.string());
    return p;
  }
  std::filesystem::path resolve(const std::string& text) const {
    std::filesystem::path p(text);
    return p.is_relative() ? base_ / p : p;
  }

  /// Canonical "key=value" text of a section, for content hashing.
  std::string section_text(const std::string& s) const {
    std::string out = "[" + s + "]\n";
    auto child = tree_.get_child_optional(s);
    if (!child) return out;
    std::map<std::string, std::string> sorted;
    for (const auto& [k, v] : *child) sorted[k] = config_detail::trim(v.data());
    for (const auto& [k, v] : sorted) out += k + "=" + v + "\n";
    return out;
  }

  const std::filesystem::path& path() const { return path_; }
  const std::filesystem::path& base() const { return base_; }
  std::string where(const std::string& key) const { return location() + ": " + key; }

 private:
  std::string location() const { return path_.string(); }

  std::filesystem::path path_;
  std::filesystem::path base_;
  std::string text_;
  boost::property_tree::ptree tree_;
};

}  // namespace gpk
