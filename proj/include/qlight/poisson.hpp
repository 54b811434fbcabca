#pragma once

#include <cmath>
#include <cstdint>

namespace qlight {

/// sqrt(count), with 0 mapped to 1 so weighted fits never divide by zero.
inline double poisson_sigma(std::uint64_t count) {
  return count == 0 ? 1.0 : std::sqrt(static_cast<double>(count));
}

}  // namespace qlight
