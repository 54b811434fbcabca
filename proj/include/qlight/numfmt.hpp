#pragma once

#include <charconv>
#include <string>

namespace qlight {

/// Shortest round-trip decimal form; locale independent, so text outputs are
/// byte-stable across hosts.
inline std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace qlight
