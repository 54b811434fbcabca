#include "qlight/error.hpp"
#include "qlight/inference.hpp"
#include "qlight/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace qlight;

namespace {

FringeScan synthetic_fringe(double r0, double v, double phi0, int n, double dwell, std::uint64_t seed) {
  Rng rng(seed);
  FringeScan scan;
  for (int k = 0; k < n; ++k) {
    const double phi = 2 * std::numbers::pi * k / n;
    const double mean = r0 * dwell * (1 + v * std::cos(2 * phi + phi0));
    scan.points.push_back({phi, rng.poisson(mean), 17000, 21000, dwell});
  }
  return scan;
}

}  // namespace

TEST_CASE("power quadratic recovers exact coefficients") {
  std::vector<PowerPoint> pts;
  for (double p : {0.0, 0.5, 1.0, 1.5, 2.0}) pts.push_back({p, 5.1e4 * p + 7.6e4 * p * p + 80, 10.0});
  const auto f = fit_power_quadratic(pts);
  CHECK(f.value("a") == doctest::Approx(5.1e4));
  CHECK(f.value("b") == doctest::Approx(7.6e4));
  CHECK(f.value("c") == doctest::Approx(80.0));
}

TEST_CASE("power quadratic keeps coefficients non-negative") {
  std::vector<PowerPoint> pts;
  for (double p : {0.0, 0.5, 1.0, 1.5, 2.0}) pts.push_back({p, 7.6e4 * p * p + 80 - 3000 * p, 10.0});
  const auto f = fit_power_quadratic(pts);
  CHECK(f.value("a") >= 0.0);
  CHECK(f.value("b") > 0.0);
}

TEST_CASE("power quadratic needs three distinct powers") {
  const std::vector<PowerPoint> pts{{1, 10, 1}, {1, 11, 1}, {2, 30, 1}, {2, 31, 1}};
  CHECK_THROWS_AS(fit_power_quadratic(pts), Error);
}

TEST_CASE("effective mode number") {
  CHECK(effective_modes(1.963) == doctest::Approx(1.0 / 0.963));
  CHECK(std::round(effective_modes(1.963) * 1000) / 1000 == 1.038);
  CHECK(effective_modes(2.0) == doctest::Approx(1.0));
  CHECK(std::isinf(effective_modes(1.0)));
}

TEST_CASE("double exponential g2 fit on an exact curve") {
  std::vector<G2Point> pts;
  for (int k = -200; k < 200; ++k) {
    const double t = 50.0 * k + 25.0;
    pts.push_back({t, 1.0 + 0.9 * std::exp(-2.0 * std::fabs(t - 30.0) / 700.0)});
  }
  const auto r = fit_g2_double_exponential(pts);
  CHECK(r.g2_zero == doctest::Approx(1.9).epsilon(1e-4));
  CHECK(r.coherence_time_s == doctest::Approx(700e-12).epsilon(1e-3));
  CHECK(r.effective_modes == doctest::Approx(1.0 / 0.9).epsilon(1e-3));
}

TEST_CASE("g2 fit with timing response undoes the blur") {
  // Laplace convolved with a Gaussian, sampled and bin averaged numerically.
  const double lambda = 350.0, sigma = 70.0, bin = 50.0;
  auto blurred = [&](double t) {
    double s = 0.0, norm = 0.0;
    for (int i = -400; i <= 400; ++i) {
      const double u = i * 1.0;
      const double g = std::exp(-u * u / (2 * sigma * sigma));
      s += g * std::exp(-std::fabs(t - u) / lambda);
      norm += g;
    }
    return s / norm;
  };
  std::vector<G2Point> pts;
  for (int k = -100; k < 100; ++k) {
    const double c = bin * k + bin / 2;
    double avg = 0.0;
    for (int j = 0; j < 10; ++j) avg += blurred(c - bin / 2 + bin * (j + 0.5) / 10) / 10;
    pts.push_back({c, 1.0 + avg});
  }
  G2FitOptions o;
  o.bin_width_ps = bin;
  o.irf_sigma_ps = sigma;
  const auto r = fit_g2_double_exponential(pts, o);
  CHECK(r.g2_zero == doctest::Approx(2.0).epsilon(5e-3));
  CHECK(r.coherence_time_s == doctest::Approx(700e-12).epsilon(5e-3));
}

TEST_CASE("g2 fit preconditions") {
  std::vector<G2Point> flat;
  for (int k = 0; k < 50; ++k) flat.push_back({k * 50.0 - 1250, 1.0});
  CHECK_THROWS_AS(fit_g2_double_exponential(flat), Error);
  std::vector<G2Point> few{{0, 2}, {1, 1}};
  CHECK_THROWS_AS(fit_g2_double_exponential(few), Error);
}

TEST_CASE("heralded g2 from counts") {
  ThreefoldCounts c;
  c.herald_singles = 1'000'000;
  c.herald_arm1 = 10'000;
  c.herald_arm2 = 10'000;
  c.triples = 4;
  c.duration_s = 10;
  const auto r = heralded_g2(c);
  CHECK(r.g2h_zero == doctest::Approx(0.04));
  CHECK(r.sigma == doctest::Approx(0.02).epsilon(0.05));  // dominated by sqrt(4) / 4
  CHECK(r.heralding_rate_hz == doctest::Approx(1e5));
  c.herald_arm2 = 0;
  CHECK_THROWS_AS(heralded_g2(c), Error);
}

TEST_CASE("fringe fit recovers visibility and phase") {
  const auto scan = synthetic_fringe(20.0, 0.9, 0.3, 32, 100.0, 4);
  const auto r = fit_fringe(scan);
  CHECK(std::fabs(r.visibility - 0.9) < 3 * r.sigma);
  CHECK(r.mean_rate_hz == doctest::Approx(20.0).epsilon(0.02));
  CHECK(std::fabs(r.phase_offset - 0.3) < 0.05);
}

TEST_CASE("zero visibility fits to zero within two sigma") {
  // The fitted amplitude is Rayleigh distributed when V = 0, so it exceeds
  // 2 sigma in exp(-2) = 13.5% of scans.
  int within = 0;
  const int scans = 200;
  for (int k = 0; k < scans; ++k) {
    const auto r = fit_fringe(synthetic_fringe(20.0, 0.0, 0.0, 32, 15.0, 500 + k));
    within += std::fabs(r.visibility) < 2 * r.sigma;
  }
  CHECK(static_cast<double>(within) / scans == doctest::Approx(1 - std::exp(-2.0)).epsilon(0.08));
}

TEST_CASE("bootstrap sigma shrinks as the square root of the counts") {
  const auto a = synthetic_fringe(16.0, 0.95, 0.0, 32, 15.0, 6);
  const auto b = synthetic_fringe(16.0, 0.95, 0.0, 32, 60.0, 7);
  const double sa = monte_carlo_visibility(a, 400, 1).sigma;
  const double sb = monte_carlo_visibility(b, 400, 1).sigma;
  CHECK(sa / sb == doctest::Approx(2.0).epsilon(0.2));
  // Independent of the worker count.
  CHECK(monte_carlo_visibility(a, 100, 3, 1).sigma == monte_carlo_visibility(a, 100, 3, 4).sigma);
}

TEST_CASE("fringe scan validation") {
  FringeScan s = synthetic_fringe(10, 0.5, 0, 6, 1, 1);
  CHECK_THROWS_AS(s.validate(), Error);
  s = synthetic_fringe(10, 0.5, 0, 16, 1, 1);
  for (auto& p : s.points) p.phase_rad *= 0.3;  // less than one two-photon period
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("fringe CSV round trip") {
  const auto s = synthetic_fringe(10, 0.5, 0, 16, 1.5, 1);
  std::stringstream buf;
  write_fringe_csv(buf, s);
  const auto back = read_fringe_csv(buf);
  REQUIRE(back.points.size() == 16);
  CHECK(back.points[3].coincidences == s.points[3].coincidences);
  CHECK(back.points[3].phase_rad == s.points[3].phase_rad);
}

TEST_CASE("free-frequency fit separates one- and two-photon fringes") {
  Rng rng(9);
  std::vector<PhaseCount> one, two;
  for (int k = 0; k < 32; ++k) {
    const double phi = 2 * std::numbers::pi * k / 32;
    one.push_back({phi, static_cast<double>(rng.poisson(2e4 * (1 + 0.98 * std::cos(phi + 0.4))))});
    two.push_back({phi, static_cast<double>(rng.poisson(240 * (1 + 0.95 * std::cos(2 * phi))))});
  }
  const auto k1 = fit_fringe_frequency(one);
  const auto k2 = fit_fringe_frequency(two);
  CHECK(k1.value("k") == doctest::Approx(1.0).epsilon(0.01));
  CHECK(k2.value("k") == doctest::Approx(2.0).epsilon(0.02));
  const auto sp = single_photon_fringe_fit(one);
  CHECK(sp.value("v") == doctest::Approx(0.98).epsilon(0.01));
}
