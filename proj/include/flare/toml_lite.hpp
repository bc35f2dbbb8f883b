#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flare/error.hpp"

namespace flare {

// Small TOML subset sufficient for flat config files: [section] headers,
// bare keys, and values that are integers, floats, booleans, double-quoted
// strings, or arrays of numbers. Comments start with '#'. Dotted keys,
// nested tables, dates, and multi-line strings are out of scope.
struct TomlValue {
  enum class Kind { Integer, Float, Boolean, String, NumberArray };
  Kind kind = Kind::Integer;
  int64_t integer = 0;
  double number = 0.0;
  bool boolean = false;
  std::string text;
  std::vector<double> array;
};

class TomlTable {
 public:
  static TomlTable parse(const std::string& content, const std::string& origin) {
    TomlTable t;
    std::istringstream in(content);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": unterminated section header");
        section = strip(s.substr(1, s.size() - 2));
        if (section.empty())
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": empty section name");
        continue;
      }
      size_t eq = find_unquoted(s, '=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(strip_comment(s.substr(eq + 1)));
      if (key.empty() || value.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": expected key = value");
      std::string full = section.empty() ? key : section + "." + key;
      t.values_[full] = parse_value(value, origin, line_no);
    }
    return t;
  }

  static TomlTable parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool contains(const std::string& key) const { return values_.count(key) > 0; }

  // Typed getters; a present key with the wrong type is a config error.
  int64_t get_integer(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.kind != TomlValue::Kind::Integer)
      throw ConfigError("config: " + key + " must be an integer");
    return it->second.integer;
  }

  double get_number(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.kind == TomlValue::Kind::Integer)
      return static_cast<double>(it->second.integer);
    if (it->second.kind != TomlValue::Kind::Float)
      throw ConfigError("config: " + key + " must be a number");
    return it->second.number;
  }

  bool get_boolean(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.kind != TomlValue::Kind::Boolean)
      throw ConfigError("config: " + key + " must be a boolean");
    return it->second.boolean;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second.kind != TomlValue::Kind::String)
      throw ConfigError("config: " + key + " must be a string");
    return it->second.text;
  }

  std::vector<double> get_array(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return {};
    if (it->second.kind != TomlValue::Kind::NumberArray)
      throw ConfigError("config: " + key + " must be an array of numbers");
    return it->second.array;
  }

  const std::map<std::string, TomlValue>& entries() const { return values_; }

 private:
  static std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  // Remove a trailing comment, respecting quoted strings.
  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static size_t find_unquoted(const std::string& s, char c) {
    bool quoted = false;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == c && !quoted) return i;
    }
    return std::string::npos;
  }

  static bool parse_number(const std::string& s, double* out) {
    const char* begin = s.c_str();
    char* end = nullptr;
    *out = std::strtod(begin, &end);
    return end == begin + s.size() && !s.empty();
  }

  static TomlValue parse_value(const std::string& v, const std::string& origin,
                               int line_no) {
    TomlValue out;
    auto fail = [&](const std::string& what) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    if (v.front() == '"') {
      if (v.size() < 2 || v.back() != '"') fail("unterminated string");
      out.kind = TomlValue::Kind::String;
      out.text = v.substr(1, v.size() - 2);
      return out;
    }
    if (v == "true" || v == "false") {
      out.kind = TomlValue::Kind::Boolean;
      out.boolean = (v == "true");
      return out;
    }
    if (v.front() == '[') {
      if (v.back() != ']') fail("unterminated array");
      out.kind = TomlValue::Kind::NumberArray;
      std::string body = v.substr(1, v.size() - 2);
      std::istringstream items(body);
      std::string item;
      while (std::getline(items, item, ',')) {
        std::string trimmed = strip(item);
        if (trimmed.empty()) fail("empty array element");
        double d = 0.0;
        if (!parse_number(trimmed, &d)) fail("array element is not a number");
        out.array.push_back(d);
      }
      return out;
    }
    // Bare scalar: integer if it parses as one without a period or exponent.
    if (v.find_first_of(".eE") == std::string::npos) {
      errno = 0;
      char* end = nullptr;
      long long i = std::strtoll(v.c_str(), &end, 10);
      if (end == v.c_str() + v.size() && errno == 0) {
        out.kind = TomlValue::Kind::Integer;
        out.integer = i;
        return out;
      }
    }
    double d = 0.0;
    if (!parse_number(v, &d)) fail("cannot parse value '" + v + "'");
    out.kind = TomlValue::Kind::Float;
    out.number = d;
    return out;
  }

  std::map<std::string, TomlValue> values_;
};

}  // namespace flare
