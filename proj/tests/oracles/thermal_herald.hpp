#pragma once

// Window-by-window heralded HBT with thermal pair-number statistics. Each
// coincidence window holds n pairs with P(n) = mu^n / (1 + mu)^(n + 1);
// every signal photon is detected with eta_h, every idler reaches arm 1 or
// arm 2 with eta / 2 each. For small mu the heralded g2 tends to
// 2 (2 - eta_h) mu, i.e. 4 mu for a weak herald.

#include "qlight/coincidence.hpp"
#include "qlight/rng.hpp"

#include <cstdint>

namespace oracle {

inline qlight::ThreefoldCounts thermal_heralded(double mu, double eta_h, double eta, std::uint64_t windows,
                                                std::uint64_t seed) {
  qlight::Rng rng(seed);
  const double p_occupied = mu / (1.0 + mu);  // P(n >= 1)
  const double p_more = mu / (1.0 + mu);      // P(n >= k + 1 | n >= k)
  qlight::ThreefoldCounts r;
  std::uint64_t w = 0;
  for (;;) {
    // Skip empty windows in one draw.
    w += rng.geometric(p_occupied);
    if (w >= windows) break;
    ++w;
    std::uint64_t n = 1 + rng.geometric(1.0 - p_more);
    bool herald = false, hit1 = false, hit2 = false;
    for (; n > 0; --n) {
      herald = herald || rng.bernoulli(eta_h);
      const double u = rng.uniform();
      if (u < eta / 2) {
        hit1 = true;
      } else if (u < eta) {
        hit2 = true;
      }
    }
    if (!herald) continue;
    ++r.herald_singles;
    r.herald_arm1 += hit1;
    r.herald_arm2 += hit2;
    r.triples += hit1 && hit2;
  }
  return r;
}

}  // namespace oracle
