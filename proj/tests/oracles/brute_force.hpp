#pragma once

// Quadratic and cubic reference counters used to check the sweep-based
// engine. Deliberately naive.

#include "qlight/coincidence.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

using qlight::Picoseconds;

inline std::vector<std::uint64_t> correlogram(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                                              Picoseconds bin, Picoseconds tmin, Picoseconds tmax) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>((tmax - tmin) / bin), 0);
  for (Picoseconds ta : a) {
    for (Picoseconds tb : b) {
      const Picoseconds d = tb - ta;
      if (d >= tmin && d < tmax) ++counts[static_cast<std::size_t>((d - tmin) / bin)];
    }
  }
  return counts;
}

inline std::uint64_t window(std::span<const Picoseconds> a, std::span<const Picoseconds> b, Picoseconds delay,
                            Picoseconds width) {
  std::uint64_t n = 0;
  for (Picoseconds ta : a) {
    for (Picoseconds tb : b) {
      const Picoseconds x = tb - ta - delay;
      if (2 * (x < 0 ? -x : x) <= width) ++n;
    }
  }
  return n;
}

inline bool within(Picoseconds t, Picoseconds center, Picoseconds width) {
  const Picoseconds x = t - center;
  return 2 * (x < 0 ? -x : x) <= width;
}

// Heralds with at least one partner in arm 1, arm 2, and in both at once.
inline qlight::ThreefoldCounts threefold(std::span<const Picoseconds> h, std::span<const Picoseconds> a1,
                                         std::span<const Picoseconds> a2, Picoseconds width, Picoseconds d1,
                                         Picoseconds d2) {
  qlight::ThreefoldCounts r;
  r.herald_singles = h.size();
  r.window_width_ps = width;
  for (Picoseconds th : h) {
    bool any1 = false, any2 = false, both = false;
    for (Picoseconds t1 : a1) {
      if (!within(t1, th + d1, width)) continue;
      any1 = true;
      for (Picoseconds t2 : a2) {
        if (within(t2, th + d2, width)) both = true;
      }
    }
    for (Picoseconds t2 : a2) any2 = any2 || within(t2, th + d2, width);
    r.herald_arm1 += any1;
    r.herald_arm2 += any2;
    r.triples += both;
  }
  return r;
}

}  // namespace oracle
