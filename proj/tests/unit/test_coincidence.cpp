#include "brute_force.hpp"

#include "qlight/coincidence.hpp"
#include "qlight/error.hpp"
#include "qlight/rng.hpp"
#include "qlight/source_sim.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace qlight;

namespace {

std::vector<Picoseconds> tags(Rng& rng, std::size_t n, Picoseconds span) {
  std::vector<Picoseconds> v;
  for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<Picoseconds>(rng.uniform() * span));
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

TEST_CASE("correlogram matches the quadratic oracle, dense and sparse") {
  for (int k = 0; k < 30; ++k) {
    Rng rng(derive_seed(1, static_cast<std::uint64_t>(k)));
    const auto a = tags(rng, 300, 200'000);
    const auto b = tags(rng, 300, 200'000);
    const Picoseconds bin = 1 + static_cast<Picoseconds>(rng.index(300));
    const Picoseconds tmin = -static_cast<Picoseconds>(rng.index(50'000));
    const Picoseconds tmax = tmin + bin * (1 + static_cast<Picoseconds>(rng.index(200)));
    const auto h = cross_correlogram(a, b, bin, tmin, tmax, 1 + k % 3);
    CHECK(h.counts == oracle::correlogram(a, b, bin, tmin, tmax));
  }
}

TEST_CASE("mirror identity over 100 stream pairs") {
  for (int k = 0; k < 100; ++k) {
    Rng rng(derive_seed(2, static_cast<std::uint64_t>(k)));
    const auto a = tags(rng, 200, 1'000'000);
    const auto b = tags(rng, 200, 1'000'000);
    // Unit bins over a range symmetric in integer delays, so bin j of (a, b)
    // and bin n-1-j of (b, a) hold the same delay magnitude.
    const auto ab1 = cross_correlogram(a, b, 1, -5000, 5001);
    const auto ba1 = cross_correlogram(b, a, 1, -5000, 5001);
    bool mirrored = true;
    for (std::size_t j = 0; j < ab1.size(); ++j) mirrored = mirrored && ab1.counts[j] == ba1.counts[ab1.size() - 1 - j];
    CHECK(mirrored);
    CHECK(ab1.total_pairs_counted == ba1.total_pairs_counted);
  }
}

TEST_CASE("self-correlation puts every tag in the zero bin") {
  Rng rng(3);
  const auto a = tags(rng, 500, 10'000'000);
  const auto h = cross_correlogram(a, a, 100, -1000, 1000);
  CHECK(h.counts[10] >= a.size());
}

TEST_CASE("independent Poisson streams give the analytic accidental density") {
  const auto a = poisson_stream("a", 5e4, 20.0, 4);
  const auto b = poisson_stream("b", 5e4, 20.0, 5);
  const auto h = cross_correlogram(a, b, 1000, -50'000, 50'000);
  const double expected = a.rate_hz() * b.rate_hz() * 20.0 * 1e-9;
  double sum = 0;
  for (auto c : h.counts) sum += static_cast<double>(c);
  const double mean = sum / static_cast<double>(h.size());
  CHECK(std::fabs(mean - expected) < 3.0 * std::sqrt(expected / h.size()));
}

TEST_CASE("correlogram argument checks") {
  const std::vector<Picoseconds> a{1, 2}, bad{2, 1};
  CHECK_THROWS_AS(cross_correlogram(a, a, 3, 0, 10), Error);
  CHECK_THROWS_AS(cross_correlogram(a, a, 0, 0, 10), Error);
  CHECK_THROWS_AS(cross_correlogram(bad, a, 1, 0, 10), Error);
}

TEST_CASE("closed coincidence window") {
  const std::vector<Picoseconds> a{1000}, b{0, 500, 1500, 2000, 2001};
  CHECK(coincidences_in_window(a, b, 0, 1000) == 2);  // both edges included
  CHECK(coincidences_in_window(a, b, 0, 1000) == oracle::window(a, b, 0, 1000));
  CHECK(coincidences_in_window(a, b, 1000, 2) == 2);
  CHECK_THROWS_AS(coincidences_in_window(a, b, 0, 0), Error);
}

TEST_CASE("threefold counting matches the cubic oracle and its ordering invariant") {
  for (int k = 0; k < 30; ++k) {
    Rng rng(derive_seed(6, static_cast<std::uint64_t>(k)));
    const auto h = tags(rng, 200, 400'000);
    const auto a1 = tags(rng, 200, 400'000);
    const auto a2 = tags(rng, 200, 400'000);
    const auto got = threefold_coincidences(h, a1, a2, 3000, 100, -200);
    const auto want = oracle::threefold(h, a1, a2, 3000, 100, -200);
    CHECK(got.herald_arm1 == want.herald_arm1);
    CHECK(got.herald_arm2 == want.herald_arm2);
    CHECK(got.triples == want.triples);
    CHECK(got.triples <= std::min(got.herald_arm1, got.herald_arm2));
    CHECK(std::min(got.herald_arm1, got.herald_arm2) <= got.herald_singles);
  }
}

TEST_CASE("CAR of independent streams is one and rejects overlapping windows") {
  const auto a = poisson_stream("a", 2e5, 5.0, 10);
  const auto b = poisson_stream("b", 2e5, 5.0, 11);
  const auto offsets = default_accidental_offsets();
  REQUIRE(offsets.size() == 20);
  const auto r = car(a, b, 0, 2000, offsets);
  CHECK(std::fabs(r.car - 1.0) < 3.0 * r.car_sigma);
  CHECK(r.car_sigma > 0.0);
  const std::vector<Picoseconds> overlap{10000, 11000};
  CHECK_THROWS_AS(car(a, b, 0, 2000, overlap), Error);
  const std::vector<Picoseconds> touching{10000, 12000};
  CHECK_NOTHROW(car(a, b, 0, 2000, touching));
}

TEST_CASE("CAR with empty accidental windows raises the dedicated error") {
  const TimeTagStream a("a", 1'000'000, {1000, 500'000});
  const TimeTagStream b("b", 1'000'000, {1000, 500'000});
  const auto offsets = default_accidental_offsets();
  CHECK_THROWS_AS(car(a, b, 0, 2000, offsets), ZeroAccidentalsError);
}

TEST_CASE("g2 normalization needs enough baseline") {
  CoincidenceHistogram h;
  h.bin_width_ps = 100;
  h.tau_min_ps = -1000;
  h.tau_max_ps = 1000;
  h.counts.assign(20, 4);
  h.counts[10] = 8;
  const auto g = g2_histogram_normalize(h, std::pair<Picoseconds, Picoseconds>{-1000, 1000});
  CHECK(g[10].g2 == doctest::Approx(8.0 / (4.0 + 4.0 / 20.0)));
  CHECK(g[10].tau_ps == doctest::Approx(50.0));
  CHECK_THROWS_AS(g2_histogram_normalize(h, std::pair<Picoseconds, Picoseconds>{-1000, -500}), Error);
  h.counts.assign(20, 0);
  CHECK_THROWS_AS(g2_histogram_normalize(h, std::pair<Picoseconds, Picoseconds>{-1000, 1000}), Error);
}

TEST_CASE("peak calibration finds the configured delay") {
  Rng rng(12);
  const auto a = tags(rng, 2000, 100'000'000);
  std::vector<Picoseconds> b;
  for (auto t : a) b.push_back(t + 3210);
  const TimeTagStream sa("a", 100'010'000, a), sb("b", 100'010'000, b);
  const auto d = calibrate_peak_delay(sa, sb, -20000, 20000, 100);
  CHECK(std::abs(d - 3210) <= 50);
  const TimeTagStream empty("e", 10, {});
  CHECK_THROWS_AS(calibrate_peak_delay(empty, empty, -100, 100, 10), Error);
}

TEST_CASE("histogram CSV") {
  CoincidenceHistogram h;
  h.bin_width_ps = 10;
  h.tau_min_ps = -10;
  h.tau_max_ps = 10;
  h.counts = {3, 4};
  std::ostringstream out;
  write_histogram_csv(out, h);
  CHECK(out.str() == "bin_center_ps,counts\n-5,3\n5,4\n");
}
