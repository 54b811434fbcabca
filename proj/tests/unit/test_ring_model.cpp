#include "qlight/error.hpp"
#include "qlight/ring_model.hpp"
#include "qlight/rng.hpp"

#include <doctest.h>

#include <sstream>

using namespace qlight;

namespace {

ResonatorSpec reference_ring() {
  ResonatorSpec r;
  r.d2 = d2_from_beta2(-8.26e-27, r.d1(), r.group_index());
  return r;
}

std::vector<TransmissionPoint> trace_around(const ResonatorSpec& r, double center, double noise, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TransmissionPoint> t;
  const double lw = r.linewidth_hz(center);
  for (int i = 0; i <= 400; ++i) {
    const double f = center - 6 * lw + 12 * lw * i / 400.0;
    t.push_back({f, transmission(r, f) + noise * rng.normal()});
  }
  return t;
}

}  // namespace

TEST_CASE("beta2 and D2 convert into each other") {
  const ResonatorSpec r;
  const double d2 = d2_from_beta2(-8.26e-27, r.d1(), r.group_index());
  CHECK(d2 > 0.0);  // anomalous
  CHECK(beta2_from_d2(d2, r.d1(), r.group_index()) == doctest::Approx(-8.26e-27).epsilon(1e-12));
}

TEST_CASE("integrated dispersion is D2 mu^2 / 2 without D3") {
  const auto r = reference_ring();
  for (int mu : {-7, -1, 0, 3, 12}) {
    CHECK(integrated_dispersion(r, mu) == doctest::Approx(r.d2 * mu * mu / 2.0).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("resonance grid is FSR spaced around the pump") {
  const auto r = reference_ring();
  const auto g = resonance_grid(r, -3, 3);
  REQUIRE(g.size() == 7);
  CHECK(g[3].mode_index == 0);
  CHECK(g[3].frequency_hz == doctest::Approx(r.center_frequency_hz));
  CHECK(g[4].frequency_hz - g[3].frequency_hz == doctest::Approx(r.fsr_hz).epsilon(1e-5));
}

TEST_CASE("transmission dips by the extinction on resonance") {
  const auto r = reference_ring();
  CHECK(transmission(r, r.center_frequency_hz) == doctest::Approx(1.0 - r.extinction).epsilon(1e-9));
  // Half depth one half-linewidth away.
  const double half = r.linewidth_hz(r.center_frequency_hz) / 2;
  CHECK(transmission(r, r.center_frequency_hz + half) == doctest::Approx(1.0 - r.extinction / 2).epsilon(1e-6));
}

TEST_CASE("Lorentzian fit recovers Q on a clean trace") {
  const auto r = reference_ring();
  const auto f = fit_resonance(trace_around(r, r.center_frequency_hz, 0.0, 1));
  CHECK(f.converged);
  CHECK(f.value("q_loaded") == doctest::Approx(r.q_loaded).epsilon(1e-6));
  CHECK(f.value("extinction") == doctest::Approx(r.extinction).epsilon(1e-6));
}

TEST_CASE("noisy Lorentzian fits scatter consistently with their sigmas") {
  const auto r = reference_ring();
  double chi2 = 0.0;
  const int n = 40;
  for (int k = 0; k < n; ++k) {
    const auto f = fit_resonance(trace_around(r, r.center_frequency_hz, 0.01, 100 + k));
    const double z = (f.value("q_loaded") - r.q_loaded) / f.sigma("q_loaded");
    chi2 += z * z;
  }
  CHECK(chi2 / n == doctest::Approx(1.0).epsilon(0.5));
}

TEST_CASE("flat trace has no dip") {
  std::vector<TransmissionPoint> t;
  for (int i = 0; i < 100; ++i) t.push_back({1.9e14 + i * 1e6, 1.0});
  CHECK_THROWS_AS(fit_resonance(t), Error);
  try {
    fit_resonance(t);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_dip_found);
  }
}

TEST_CASE("dispersion fit returns the configured beta2 and zero for a flat comb") {
  const auto r = reference_ring();
  std::vector<ModeFrequency> modes;
  for (const auto& line : resonance_grid(r, -20, 20)) modes.push_back({line.mode_index, line.frequency_hz});
  const auto f = fit_dispersion(modes, r.group_index());
  CHECK(f.value("beta2") == doctest::Approx(-8.26e-27).epsilon(1e-6));

  ResonatorSpec flat;
  modes.clear();
  for (const auto& line : resonance_grid(flat, -20, 20)) modes.push_back({line.mode_index, line.frequency_hz});
  CHECK(std::fabs(fit_dispersion(modes, flat.group_index()).value("beta2")) < 1e-31);
}

TEST_CASE("dispersion fit needs four distinct modes") {
  const std::vector<ModeFrequency> modes{{0, 1.9e14}, {1, 1.9033e14}, {2, 1.9066e14}};
  CHECK_THROWS_AS(fit_dispersion(modes, 2.4), Error);
}

TEST_CASE("channel plan pairs conserve energy and carry measured labels") {
  const auto r = reference_ring();
  const std::vector<int> idx{2, 3, 4, 5, 6, 7, 8};
  const auto plan = build_channel_plan(r, idx, 100e9, measured_pair_wavelengths());
  const auto [s, i] = channel_pair(plan, 6);
  CHECK(s.wavelength_nm() == doctest::Approx(1534.30));
  CHECK(i.wavelength_nm() == doctest::Approx(1566.23));
  CHECK(std::fabs(s.center_hz + i.center_hz - 2 * plan.pump.center_hz) <= plan.tolerance_hz);
  CHECK_THROWS_AS(channel_pair(plan, 9), Error);
  CHECK_THROWS_AS(channel_pair(plan, 1), Error);
}

TEST_CASE("comb wavelengths sit within a nanometre of the measured labels") {
  const auto r = reference_ring();
  const std::vector<int> idx{2, 3, 4, 5, 6, 7, 8};
  const auto plan = build_channel_plan(r, idx, 100e9);
  for (const auto& [k, labels] : measured_pair_wavelengths()) {
    const auto [s, i] = channel_pair(plan, k);
    CHECK(std::fabs(s.wavelength_nm() - labels.first) < 1.0);
    CHECK(std::fabs(i.wavelength_nm() - labels.second) < 1.0);
  }
}

TEST_CASE("trace and resonance CSV readers") {
  std::istringstream trace("frequency_hz,transmission\n1.0e14,0.9\n1.1e14,0.5\n");
  const auto t = read_trace_csv(trace);
  REQUIRE(t.size() == 2);
  CHECK(t[1].transmission == doctest::Approx(0.5));
  std::istringstream lines("mu,frequency_hz\n-1,1.9e14\n2,1.91e14\n");
  const auto m = read_resonances_csv(lines);
  REQUIRE(m.size() == 2);
  CHECK(m[0].mu == -1);
  std::istringstream bad("mu,frequency_hz\nx,1\n");
  CHECK_THROWS(read_resonances_csv(bad));
}
