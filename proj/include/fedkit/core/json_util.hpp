#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fedkit/core/error.hpp"

namespace fedkit {

using Json = nlohmann::json;

/// Parses JSON text, mapping parser failures to SyntaxError with line:column.
inline Json parse_json_text(std::string_view text, std::string_view what = "document") {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const auto limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorCode::SyntaxError, std::string(what) + " at line " + std::to_string(line) +
                                     ", column " + std::to_string(col) + ": malformed JSON");
  }
}

/// Reads one JSON object field by field. Fields never consumed are reported
/// by finish(), so every schema rejects unknown keys the same way.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string location) : obj_(obj), loc_(std::move(location)) {
    if (!obj_.is_object()) fail(ErrorCode::SchemaError, loc_ + ": expected an object");
  }

  const std::string& location() const { return loc_; }
  std::string at(std::string_view key) const { return loc_ + "." + std::string(key); }

  bool has(std::string_view key) const { return obj_.contains(std::string(key)); }

  const Json& raw(std::string_view key) {
    const std::string k(key);
    if (!obj_.contains(k)) fail(ErrorCode::SchemaError, "missing-field " + at(key));
    seen_.insert(k);
    return obj_.at(k);
  }

  const Json* raw_optional(std::string_view key) {
    const std::string k(key);
    if (!obj_.contains(k)) return nullptr;
    seen_.insert(k);
    return &obj_.at(k);
  }

  template <typename T>
  T required(std::string_view key) {
    return convert<T>(raw(key), at(key));
  }

  template <typename T>
  T optional(std::string_view key, T fallback) {
    if (const Json* j = raw_optional(key)) return convert<T>(*j, at(key));
    return fallback;
  }

  void finish() const {
    for (const auto& [k, _] : obj_.items()) {
      if (!seen_.count(k)) fail(ErrorCode::SchemaError, "unknown-field " + at(k));
    }
  }

  template <typename T>
  static T convert(const Json& j, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!j.is_number()) throw std::invalid_argument("number expected");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!j.is_number_integer()) throw std::invalid_argument("integer expected");
        if constexpr (std::is_unsigned_v<T>) {
          if (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)
            throw std::invalid_argument("non-negative integer expected");
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) throw std::invalid_argument("boolean expected");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!j.is_string()) throw std::invalid_argument("string expected");
      }
      return j.get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::SchemaError, "bad-type " + where + ": " + e.what());
    }
  }

 private:
  const Json& obj_;
  std::string loc_;
  std::set<std::string> seen_;
};

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const Json& require_array(const Json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorCode::SchemaError, "bad-type " + where + ": array expected");
  return j;
}

}  // namespace fedkit
