/* Copyright 2026 The pom Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==========================================================================*/

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <cstring>
#include <optional>
#include <filesystem>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pom/error.hpp"
#include "pom/util/files.hpp"

namespace pom::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int sample_parallelism = 1;
  std::size_t max_upload_bytes = 16 * 1024 * 1024;
  std::string default_checkpoint;
  std::vector<std::string> allowed_origins = {"*"};
};

/// Config errors carry the offending line.
class ConfigError : public UsageError {
 public:
  ConfigError(const std::string& source, int line, const std::string& what)
      : UsageError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Reads one TOML scalar from `s` starting at `pos`; supports basic and literal
// strings, integers and booleans.
struct TomlValue {
  enum Kind { string, integer, boolean, array } kind = string;
  std::string text;
  long long number = 0;
  bool flag = false;
  std::vector<std::string> items;
};

class LineParser {
 public:
  LineParser(std::string s, const std::string& source, int line) : s_(std::move(s)), source_(source), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(source_, line_, what); }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#' || s_[pos_] == '\r';
  }

  std::string key() {
    skip_ws();
    const auto start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail("expected a key");
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string string_value() {
    const char quote = s_[pos_++];
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != quote) {
      char c = s_[pos_++];
      if (quote == '"' && c == '\\') {
        if (pos_ >= s_.size()) fail("unterminated escape");
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '\\': c = '\\'; break;
          case '"': c = '"'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  TomlValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    TomlValue v;
    const char c = s_[pos_];
    if (c == '"' || c == '\'') {
      v.kind = TomlValue::string;
      v.text = string_value();
    } else if (c == '[') {
      v.kind = TomlValue::array;
      ++pos_;
      skip_ws();
      while (pos_ < s_.size() && s_[pos_] != ']') {
        if (s_[pos_] != '"' && s_[pos_] != '\'') fail("arrays may only hold strings");
        v.items.push_back(string_value());
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      if (pos_ >= s_.size()) fail("unterminated array");
      ++pos_;
    } else if (s_.compare(pos_, 4, "true") == 0 || s_.compare(pos_, 5, "false") == 0) {
      v.kind = TomlValue::boolean;
      v.flag = s_[pos_] == 't';
      pos_ += v.flag ? 4 : 5;
    } else {
      v.kind = TomlValue::integer;
      const auto start = pos_;
      if (s_[pos_] == '-' || s_[pos_] == '+') ++pos_;
      while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string digits;
      for (auto i = start; i < pos_; ++i)
        if (s_[i] != '_') digits.push_back(s_[i]);
      if (digits.empty() || digits == "-" || digits == "+") fail("invalid value");
      try {
        v.number = std::stoll(digits);
      } catch (const std::exception&) {
        fail("integer out of range");
      }
    }
    if (!at_end_or_comment()) fail("unexpected trailing characters");
    return v;
  }

 private:
  std::string s_;
  std::size_t pos_ = 0;
  const std::string& source_;
  int line_;
};

}  // namespace detail

/// Parses the flat TOML config. Keys may sit at top level or under [service].
inline ServiceConfig parse_config(const std::string& text, const std::string& source = "config") {
  ServiceConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    detail::LineParser p(raw, source, line_no);
    if (p.at_end_or_comment()) continue;
    const std::string line = detail::trim(raw);
    if (line.front() == '[') {
      if (line.rfind("[service]", 0) != 0) p.fail("unknown table " + line);
      continue;
    }
    const std::string key = p.key();
    p.expect('=');
    const auto v = p.value();
    auto need = [&](detail::TomlValue::Kind k, const char* what) {
      if (v.kind != k) p.fail("'" + key + "' must be " + what);
    };
    auto positive = [&](long long lo) {
      need(detail::TomlValue::integer, "an integer");
      if (v.number < lo) p.fail("'" + key + "' must be >= " + std::to_string(lo));
      return v.number;
    };
    if (key == "data_dir") {
      need(detail::TomlValue::string, "a string");
      cfg.data_dir = v.text;
    } else if (key == "host") {
      need(detail::TomlValue::string, "a string");
      cfg.host = v.text;
    } else if (key == "port") {
      const auto port = positive(0);
      if (port > 65535) p.fail("'port' must be <= 65535");
      cfg.port = static_cast<int>(port);
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(positive(1));
    } else if (key == "sample_parallelism") {
      cfg.sample_parallelism = static_cast<int>(positive(1));
    } else if (key == "max_upload_bytes") {
      cfg.max_upload_bytes = static_cast<std::size_t>(positive(1));
    } else if (key == "default_checkpoint") {
      need(detail::TomlValue::string, "a string");
      cfg.default_checkpoint = v.text;
    } else if (key == "allowed_origins") {
      need(detail::TomlValue::array, "an array of strings");
      cfg.allowed_origins = v.items;
    } else {
      p.fail("unknown key '" + key + "'");
    }
  }
  return cfg;
}

/// POM_DATA_DIR, POM_PORT and POM_WORKERS override the file.
inline void apply_env(ServiceConfig& cfg) {
  if (const char* v = std::getenv("POM_DATA_DIR"); v && *v) cfg.data_dir = v;
  auto int_env = [](const char* name, int lo, int hi) -> std::optional<int> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    try {
      std::size_t used = 0;
      const int n = std::stoi(v, &used);
      if (used != std::strlen(v) || n < lo || n > hi) throw std::out_of_range(name);
      return n;
    } catch (const std::exception&) {
      throw UsageError(std::string("invalid ") + name + "=" + v);
    }
  };
  if (auto p = int_env("POM_PORT", 0, 65535)) cfg.port = *p;
  if (auto w = int_env("POM_WORKERS", 1, 1024)) cfg.workers = *w;
}

inline ServiceConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  auto cfg = parse_config(text, path.string());
  apply_env(cfg);
  return cfg;
}

}  // namespace pom::service
