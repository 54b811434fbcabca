#include "qlight/coincidence.hpp"
#include "qlight/error.hpp"
#include "qlight/poisson.hpp"
#include "qlight/source_sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace qlight;

namespace {

SourceConfig reference_source() {
  SourceConfig s;
  ResonatorSpec r;
  r.d2 = d2_from_beta2(-8.26e-27, r.d1(), r.group_index());
  const std::vector<int> idx{2, 3, 4, 5, 6, 7, 8};
  s.channel_plan = build_channel_plan(r, idx, 100e9, measured_pair_wavelengths());
  s.extra_loss_db = 7.64;
  s.idler_delay_ps = 1300;
  return s;
}

void check_within(double value, double expected, double sigmas) {
  const double sigma = std::sqrt(std::max(expected, 1.0));
  CHECK(std::fabs(value - expected) <= sigmas * sigma);
}

}  // namespace

TEST_CASE("singles rate decomposition") {
  const auto s = reference_source();
  const DetectorSpec d;
  const auto r0 = singles_rate(s, d, Arm::idler, 6, 0.0);
  CHECK(r0.total() == doctest::Approx(80.0));
  const auto r1 = singles_rate(s, d, Arm::idler, 6, 1.0);
  const auto r2 = singles_rate(s, d, Arm::idler, 6, 2.0);
  CHECK(r2.quadratic == doctest::Approx(4.0 * r1.quadratic));
  CHECK(r2.linear == doctest::Approx(2.0 * r1.linear));
  CHECK(r1.linear == doctest::Approx(5.1e4));
  // 7.64 dB of extra loss makes b = B * eta = 7.6e4 within rounding.
  CHECK(r1.quadratic == doctest::Approx(7.6e4).epsilon(0.005));
  CHECK_THROWS_AS(singles_rate(s, d, Arm::idler, 9, 1.0), Error);
}

TEST_CASE("a, b, c substitution") {
  const double a = 5.1e4, b = 7.6e4, c = 80.0, p = 1.0;
  CHECK(a * p + b * p * p + c == doctest::Approx(1.2708e5));
}

TEST_CASE("arm transmittance splits the coupling loss per facet") {
  SourceConfig s = reference_source();
  s.extra_loss_db = 0.0;
  const DetectorSpec d;
  CHECK(arm_transmittance(s, d) == doctest::Approx(std::pow(10.0, -(4.0 + 1.5) / 10.0) * 0.75));
  CHECK(arm_transmittance(s, d, 3.0) == doctest::Approx(arm_transmittance(s, d) * std::pow(10.0, -0.3)));
}

TEST_CASE("simulated singles and coincidences follow the rate model") {
  const auto s = reference_source();
  DetectorSpec d;
  d.dead_time_s = 0.0;
  const double duration = 2.0;
  const auto st = generate_pair_streams(s, d, d, 6, duration, 99);
  check_within(static_cast<double>(st.idler.size()), singles_rate(s, d, Arm::idler, 6, 1.0).total() * duration, 4.0);
  check_within(static_cast<double>(st.signal.size()), singles_rate(s, d, Arm::signal, 6, 1.0).total() * duration, 4.0);
  // Wide window catches every true pair.
  const double eta = arm_transmittance(s, d);
  const double pairs = pair_rate(s, 1.0) * eta * eta * duration;
  const auto accidental = st.signal.rate_hz() * st.idler.rate_hz() * 20e-9 * duration;
  check_within(static_cast<double>(coincidences_in_window(st.signal, st.idler, 1300, 20000)), pairs + accidental, 4.0);
}

TEST_CASE("detector output respects dead time and duration") {
  const auto s = reference_source();
  DetectorSpec d;
  d.dead_time_s = 50e-9;
  const auto st = generate_pair_streams(s, d, d, 6, 0.5, 3);
  const auto t = st.idler.tags();
  for (std::size_t k = 1; k < t.size(); ++k) REQUIRE(t[k] - t[k - 1] >= 50'000);
  CHECK(t.back() <= st.idler.duration_ps());
  CHECK(st.idler.label() == "idler6");
}

TEST_CASE("generation is a pure function of the seed") {
  const auto s = reference_source();
  const DetectorSpec d;
  const auto a = generate_pair_streams(s, d, d, 5, 0.2, 11);
  const auto b = generate_pair_streams(s, d, d, 5, 0.2, 11);
  const auto c = generate_pair_streams(s, d, d, 5, 0.2, 12);
  CHECK(a.signal == b.signal);
  CHECK(a.idler == b.idler);
  CHECK_FALSE(a.idler == c.idler);
}

TEST_CASE("zero power leaves only dark counts") {
  SourceConfig s = reference_source();
  s.pump_power_mw = 0.0;
  const DetectorSpec d;
  const auto st = generate_pair_streams(s, d, d, 6, 20.0, 5);
  check_within(static_cast<double>(st.idler.size()), 80.0 * 20.0, 4.0);
}

TEST_CASE("thermal occupation guard") {
  SourceConfig s = reference_source();
  s.pump_power_mw = 40.0;  // R tau about 1.2
  const DetectorSpec d;
  CHECK_THROWS_AS(generate_pair_streams(s, d, d, 6, 1e-3, 1), Error);
}

TEST_CASE("Franson transform: central peak follows 1 + V cos 2 phi and equals the satellites at V = 0") {
  const auto s = reference_source();
  DetectorSpec d;
  d.dark_rate_hz = 0.0;
  UmiSpec u;
  auto central = [&](double phase, double v, std::uint64_t seed, std::uint64_t* sats = nullptr) {
    UmiSpec x = u;
    x.phase_rad = phase;
    x.two_photon_visibility = v;
    const auto st = franson_transform(s, d, d, 6, 2.0, x, seed);
    if (sats) {
      *sats = coincidences_in_window(st.signal, st.idler, 1300 - 10000, 2000) +
              coincidences_in_window(st.signal, st.idler, 1300 + 10000, 2000);
    }
    return static_cast<double>(coincidences_in_window(st.signal, st.idler, 1300, 2000));
  };
  const double bright = central(0.0, 1.0, 21);
  const double dark = central(std::acos(-1.0) / 2, 1.0, 22);
  CHECK(dark < 0.1 * bright);
  std::uint64_t sats = 0;
  const double flat = central(0.0, 0.0, 23, &sats);
  check_within(flat, static_cast<double>(sats), 4.0);
}

TEST_CASE("UMI delay must exceed ten correlation times") {
  UmiSpec u;
  u.delay_s = 2e-9;
  CHECK_THROWS_AS(u.validate(0.354e-9), Error);
}

TEST_CASE("HBT splitter routes half the tags to each output") {
  const auto in = poisson_stream("x", 1e5, 1.0, 8);
  const auto [a, b] = hbt_split(in, 9);
  CHECK(a.size() + b.size() == in.size());
  check_within(static_cast<double>(a.size()), in.size() / 2.0, 4.0);
  CHECK(a.label() == "x/a");
}

TEST_CASE("heralded streams: herald rate matches the signal singles model") {
  const auto s = reference_source();
  const DetectorSpec d;
  const auto st = generate_heralded_streams(s, d, d, d, 6, 1.0, 31);
  const double expected = singles_rate(s, d, Arm::signal, 6, 1.0).total();
  // Dead time loses about R tau of the counts.
  CHECK(st.herald.rate_hz() == doctest::Approx(expected * (1 - expected * d.dead_time_s)).epsilon(0.02));
  CHECK(st.arm1.rate_hz() == doctest::Approx(st.arm2.rate_hz()).epsilon(0.03));
}

TEST_CASE("Raman noise spectrum has its peaks at the configured wavelengths") {
  SourceConfig s = reference_source();
  s.raman_peaks = {{1516.5, 4.0, 2e5}, {1585.3, 4.0, 2e5}};
  CHECK(raman_noise_rate(s, 1516.5, 1.0) > raman_noise_rate(s, 1514.0, 1.0));
  CHECK(raman_noise_rate(s, 1516.5, 1.0) > raman_noise_rate(s, 1519.0, 1.0));
  CHECK(raman_noise_rate(s, 1550.0, 2.0) == doctest::Approx(2 * raman_noise_rate(s, 1550.0, 1.0)));
  CHECK_THROWS_AS(raman_noise_rate(s, 1470.0, 1.0), Error);
}
