// SPDX-License-Identifier: Apache-2.0
#include "mmrf/toml_lite.hpp"

#include <cctype>
#include <charconv>
#include <limits>
#include <set>
#include <sstream>

#include "mmrf/error.hpp"

namespace mmrf::toml {

double Value::as_double() const {
  if (auto* i = std::get_if<std::int64_t>(&data)) return static_cast<double>(*i);
  return std::get<double>(data);
}

namespace {

class Cursor {
 public:
  Cursor(const std::string& s, int line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line_) + ": " + what);
  }
  bool done() const { return pos_ >= s_.size(); }
  char peek() const { return done() ? '\0' : s_[pos_]; }
  char get() { return done() ? '\0' : s_[pos_++]; }
  void skip_ws() {
    while (!done() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  /// Remaining input must be blank or a comment.
  void expect_end() {
    skip_ws();
    if (!done() && peek() != '#') fail("unexpected trailing characters '" + s_.substr(pos_) + "'");
  }
  void expect(char c) {
    skip_ws();
    if (get() != c) fail(std::string("expected '") + c + "'");
  }

  std::string key() {
    skip_ws();
    std::string out;
    if (peek() == '"' || peek() == '\'') return string();
    while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) out += get();
    if (out.empty()) fail("expected a key");
    return out;
  }

  std::string dotted_key() {
    std::string k = key();
    skip_ws();
    while (peek() == '.') {
      get();
      k += "." + key();
      skip_ws();
    }
    return k;
  }

  std::string string() {
    const char q = get();
    std::string out;
    while (true) {
      if (done()) fail("unterminated string");
      char c = get();
      if (c == q) break;
      if (q == '"' && c == '\\') {
        const char e = get();
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
        continue;
      }
      out += c;
    }
    return out;
  }

  Value value() {
    skip_ws();
    Value v;
    v.line = line_;
    const char c = peek();
    if (c == '"' || c == '\'') {
      v.data = string();
    } else if (c == '[') {
      get();
      Array arr;
      skip_ws();
      while (peek() != ']') {
        arr.push_back(value());
        skip_ws();
        if (peek() == ',') {
          get();
          skip_ws();
        } else if (peek() != ']') {
          fail("expected ',' or ']' in array");
        }
      }
      get();
      v.data = std::move(arr);
    } else if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      v.data = true;
    } else if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      v.data = false;
    } else {
      std::string tok;
      while (!done() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                         peek() == '.' || peek() == '_')) {
        const char ch = get();
        if (ch != '_') tok += ch;
      }
      if (tok.empty()) fail("expected a value");
      if (tok.front() == '+') tok.erase(0, 1);
      const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" || tok == "-inf" || tok == "nan";
      if (is_float) {
        double d = 0.0;
        if (tok == "inf") {
          d = std::numeric_limits<double>::infinity();
        } else if (tok == "-inf") {
          d = -std::numeric_limits<double>::infinity();
        } else if (tok == "nan") {
          d = std::numeric_limits<double>::quiet_NaN();
        } else {
          auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
          if (ec != std::errc() || p != tok.data() + tok.size()) fail("malformed number '" + tok + "'");
        }
        v.data = d;
      } else {
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), i);
        if (ec != std::errc() || p != tok.data() + tok.size()) fail("malformed value '" + tok + "'");
        v.data = i;
      }
    }
    return v;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
  int line_;
};

}  // namespace

Document parse(const std::string& text) {
  Document doc;
  std::set<std::string> seen;
  std::set<std::string> tables;
  std::string table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Cursor c(line, lineno);
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;
    if (c.peek() == '[') {
      c.get();
      table = c.dotted_key();
      c.expect(']');
      c.expect_end();
      if (!tables.insert(table).second) c.fail("table [" + table + "] defined twice");
      continue;
    }
    const std::string k = c.dotted_key();
    c.expect('=');
    Value v = c.value();
    c.expect_end();
    const std::string full = table.empty() ? k : table + "." + k;
    if (!seen.insert(full).second) c.fail("duplicate key '" + full + "'");
    doc.entries.emplace_back(full, std::move(v));
  }
  return doc;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace mmrf::toml
