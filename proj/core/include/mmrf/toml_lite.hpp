// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace mmrf::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<bool, std::int64_t, double, std::string, Array> data;
  int line = 0;

  bool is_number() const { return std::holds_alternative<std::int64_t>(data) || std::holds_alternative<double>(data); }
  double as_double() const;
};

/// Flat view of a document: "table.key" -> value, in document order of
/// first appearance.
struct Document {
  std::vector<std::pair<std::string, Value>> entries;
};

/// Parses the subset of TOML used for configuration files: comments,
/// [table] and [a.b] headers, bare or quoted keys, basic and literal
/// strings, integers, floats, booleans and single-line arrays.
/// Throws ConfigError("line N: ...") on malformed input or duplicate keys.
Document parse(const std::string& text);

/// Basic-string literal with escapes.
std::string quote(const std::string& s);

}  // namespace mmrf::toml
