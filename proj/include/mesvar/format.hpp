#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace mesvar {

// Shortest decimal representation that round-trips to the same double.
// All file outputs use this so reruns are byte-identical.
inline std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

}  // namespace mesvar
