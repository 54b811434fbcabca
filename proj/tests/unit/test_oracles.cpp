#include "brute_force.hpp"
#include "thermal_herald.hpp"

#include "qlight/inference.hpp"

#include <doctest.h>

TEST_CASE("thermal herald oracle follows 2 (2 - eta_h) mu") {
  for (double eta_h : {0.05, 0.5}) {
    const double mu = 0.01;
    const auto windows = static_cast<std::uint64_t>(4000.0 / (eta_h * mu * mu));
    const auto g = qlight::heralded_g2(oracle::thermal_heralded(mu, eta_h, 1.0, windows, 77));
    CHECK(g.g2h_zero == doctest::Approx(2 * (2 - eta_h) * mu).epsilon(0.1));
  }
}

TEST_CASE("brute-force window oracle on a hand example") {
  const std::vector<qlight::Picoseconds> a{0, 10}, b{5, 12, 30};
  CHECK(oracle::window(a, b, 0, 10) == 3);  // (0,5) (10,5) (10,12)
  CHECK(oracle::correlogram(a, b, 10, -10, 30) == std::vector<std::uint64_t>{1, 2, 1, 1});
}
