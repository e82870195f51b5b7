#pragma once

// Plain-text key=value documents: one pair per line, '#' starts a comment
// line, surrounding whitespace ignored.

#include <charconv>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "strokeseg/error.hpp"

namespace strokeseg::kv {

struct Pair {
  std::string key;
  std::string value;
  int line = 0;
};

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<Pair> parse(std::string_view text, ErrorKind kind, const std::string& what) {
  std::vector<Pair> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string_view t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    require(eq != std::string_view::npos && eq > 0, kind,
            what + ":" + std::to_string(n) + ": expected key=value, got '" + std::string(t) + "'");
    out.push_back({std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))), n});
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.emplace_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T to_number(std::string_view s, ErrorKind kind, const std::string& what) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  require(ec == std::errc() && p == end && !s.empty(), kind,
          what + ": invalid number '" + std::string(s) + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace strokeseg::kv
