#pragma once

// Minimal TOML-subset reader for experiment configuration files, plus a
// loader that dispatches on file extension (.toml / .json) and returns a
// uniform nlohmann::json document.
//
// Supported TOML subset:
//   - `key = value` pairs with bare (optionally dotted) keys
//   - section headers `[table]` and `[a.b]` (dotted headers nest)
//   - values: basic "strings", integers, floats, booleans, and arrays
//     (nested, multi-line, trailing comma allowed)
//   - `#` comments outside strings
//
// Not supported (rejected with ConfigError): inline tables `{...}`,
// date/time literals, multi-line strings, arrays-of-tables `[[...]]`.

#include <json.hpp>

#include <cctype>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fractdim/common.hpp"

namespace fractdim {

namespace toml_detail {

/// Strips a trailing `#` comment (string-aware) and rejects lines with an
/// unterminated basic string.
inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      if (c == '\\') {
        ++i;  // skip the escaped character
      } else if (c == '"') {
        in_string = false;
      }
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  if (in_string) throw ConfigError("toml: unterminated string: " + line);
  return line;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

/// Net count of `[` minus `]` outside strings; used to detect multi-line
/// array values.
inline int bracket_delta(const std::string& s) {
  bool in_string = false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

inline bool valid_bare_key(const std::string& key) {
  if (key.empty()) return false;
  for (const char c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      return false;
  }
  return true;
}

/// Splits a (possibly dotted) key path into validated bare-key segments.
inline std::vector<std::string> split_key_path(const std::string& key) {
  std::vector<std::string> parts;
  std::string part;
  std::stringstream ss(key);
  while (std::getline(ss, part, '.')) parts.push_back(trim(part));
  if (key.empty() || key.back() == '.') parts.emplace_back();
  for (const auto& p : parts) {
    if (!valid_bare_key(p))
      throw ConfigError("toml: invalid key: '" + key + "'");
  }
  return parts;
}

struct Cursor {
  const std::string& text;
  std::size_t i = 0;

  bool done() const { return i >= text.size(); }
  char peek() const { return text[i]; }
  void skip_ws() {
    while (!done() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  }
};

inline nlohmann::json parse_value(Cursor& cur);

inline nlohmann::json parse_string(Cursor& cur) {
  ++cur.i;  // consume the opening quote
  std::string out;
  while (!cur.done()) {
    const char c = cur.text[cur.i++];
    if (c == '"') return nlohmann::json(out);
    if (c == '\\') {
      if (cur.done()) break;
      const char e = cur.text[cur.i++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case '/': out += '/'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        default:
          throw ConfigError(std::string("toml: unsupported escape: \\") + e);
      }
    } else {
      out += c;
    }
  }
  throw ConfigError("toml: unterminated string");
}

inline nlohmann::json parse_array(Cursor& cur) {
  ++cur.i;  // consume '['
  nlohmann::json arr = nlohmann::json::array();
  cur.skip_ws();
  while (true) {
    if (cur.done()) throw ConfigError("toml: unclosed array");
    if (cur.peek() == ']') {
      ++cur.i;
      return arr;
    }
    arr.push_back(parse_value(cur));
    cur.skip_ws();
    if (cur.done()) throw ConfigError("toml: unclosed array");
    if (cur.peek() == ',') {
      ++cur.i;
      cur.skip_ws();
    } else if (cur.peek() != ']') {
      throw ConfigError("toml: expected ',' or ']' in array");
    }
  }
}

/// Parses a bare scalar token: boolean, integer, or float. Anything else
/// (dates, times, bare words) is rejected.
inline nlohmann::json parse_scalar(Cursor& cur) {
  std::size_t start = cur.i;
  while (!cur.done()) {
    const char c = cur.peek();
    if (c == ',' || c == ']' ||
        std::isspace(static_cast<unsigned char>(c)))
      break;
    ++cur.i;
  }
  const std::string tok = cur.text.substr(start, cur.i - start);
  if (tok.empty()) throw ConfigError("toml: expected a value");
  if (tok == "true") return nlohmann::json(true);
  if (tok == "false") return nlohmann::json(false);

  // Underscore digit separators are allowed between digits.
  std::string digits;
  digits.reserve(tok.size());
  for (std::size_t i = 0; i < tok.size(); ++i) {
    if (tok[i] == '_') {
      const bool ok =
          i > 0 && i + 1 < tok.size() &&
          std::isdigit(static_cast<unsigned char>(tok[i - 1])) &&
          std::isdigit(static_cast<unsigned char>(tok[i + 1]));
      if (!ok) throw ConfigError("toml: bad '_' placement in: " + tok);
      continue;
    }
    digits += tok[i];
  }

  const bool looks_integral =
      digits.find_first_of(".eEpP") == std::string::npos &&
      digits.find_first_not_of("+-0123456789") == std::string::npos &&
      // a lone sign, or inner signs as in dates, are not integers
      digits.find_first_of("+-", 1) == std::string::npos;
  if (looks_integral) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(digits, &pos);
      if (pos == digits.size()) return nlohmann::json(v);
    } catch (const std::out_of_range&) {
      // fall through to the float path
    } catch (const std::invalid_argument&) {
      throw ConfigError("toml: invalid value: " + tok);
    }
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(digits, &pos);
    if (pos == digits.size()) return nlohmann::json(v);
  } catch (const std::exception&) {
    // handled below
  }
  throw ConfigError("toml: invalid value: " + tok);
}

inline nlohmann::json parse_value(Cursor& cur) {
  cur.skip_ws();
  if (cur.done()) throw ConfigError("toml: expected a value");
  const char c = cur.peek();
  if (c == '"') return parse_string(cur);
  if (c == '[') return parse_array(cur);
  if (c == '{') throw ConfigError("toml: inline tables are not supported");
  return parse_scalar(cur);
}

/// Walks (creating as needed) the nested-object path and returns the table.
inline nlohmann::json* descend(nlohmann::json* root,
                               const std::vector<std::string>& path) {
  nlohmann::json* node = root;
  for (const auto& part : path) {
    if (!node->is_object())
      throw ConfigError("toml: key '" + part + "' redefines a value");
    if (!node->contains(part)) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
  }
  return node;
}

}  // namespace toml_detail

/// Parses the supported TOML subset into a JSON document. Throws ConfigError
/// on anything outside the subset or malformed input.
inline nlohmann::json parse_toml_lite(const std::string& text) {
  using namespace toml_detail;
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;

  std::stringstream stream(text);
  std::string raw;
  while (std::getline(stream, raw)) {
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[' && line.back() == ']') {
      const std::string inner = trim(line.substr(1, line.size() - 2));
      table = descend(&root, split_key_path(inner));
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("toml: expected 'key = value', got: " + line);
    const std::string key = trim(line.substr(0, eq));
    std::string value_text = line.substr(eq + 1);

    // Multi-line arrays: keep consuming physical lines until brackets
    // outside strings balance.
    int depth = bracket_delta(value_text);
    while (depth > 0 && std::getline(stream, raw)) {
      value_text += '\n';
      value_text += strip_comment(raw);
      depth = bracket_delta(value_text);
    }
    if (depth != 0) throw ConfigError("toml: unclosed array for key: " + key);

    Cursor cur{value_text, 0};
    nlohmann::json value = parse_value(cur);
    cur.skip_ws();
    if (!cur.done())
      throw ConfigError("toml: trailing characters after value for key: " +
                        key);

    const auto path = split_key_path(key);
    nlohmann::json* parent = table;
    if (path.size() > 1)
      parent = descend(table, {path.begin(), path.end() - 1});
    if (parent->contains(path.back()))
      throw ConfigError("toml: duplicate key: " + key);
    (*parent)[path.back()] = std::move(value);
  }
  return root;
}

/// Loads a configuration file, dispatching on the extension: `.toml` is
/// parsed with the TOML-subset reader, `.json` with the JSON parser. All
/// failures (missing file, unknown extension, parse errors) surface as
/// ConfigError.
inline nlohmann::json load_config_file(const std::string& path) {
  const auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) ==
               0;
  };
  const bool is_toml = ends_with(".toml");
  const bool is_json = ends_with(".json");
  if (!is_toml && !is_json)
    throw ConfigError("unsupported config extension (want .toml or .json): " +
                      path);

  std::ifstream file(path);
  if (!file) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << file.rdbuf();
  const std::string text = buffer.str();

  if (is_toml) return parse_toml_lite(text);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("json parse error in ") + path + ": " +
                      e.what());
  }
}

}  // namespace fractdim
