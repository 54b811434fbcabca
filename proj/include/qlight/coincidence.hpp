#pragma once

// Exact correlation of sorted time-tag streams. Every count here is an
// integer over all pairs (no one-to-one matching), computed by linear sweeps.

#include "qlight/timetag.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace qlight {

/// Counts of t_b - t_a over half-open bins [tau, tau + bin_width).
struct CoincidenceHistogram {
  Picoseconds bin_width_ps = 0;
  Picoseconds tau_min_ps = 0;
  Picoseconds tau_max_ps = 0;
  std::vector<std::uint64_t> counts;
  std::uint64_t total_pairs_counted = 0;
  double acquisition_duration_s = 0.0;

  std::size_t size() const noexcept { return counts.size(); }
  Picoseconds bin_start(std::size_t k) const noexcept {
    return tau_min_ps + static_cast<Picoseconds>(k) * bin_width_ps;
  }
  double bin_center_ps(std::size_t k) const noexcept {
    return static_cast<double>(bin_start(k)) + 0.5 * static_cast<double>(bin_width_ps);
  }
};

/// Throws Error(unsorted_stream) on unsorted input and Error(invalid_argument)
/// unless bin_width > 0 divides tau_max - tau_min > 0. Work is split over
/// `threads` chunks of `a`; the result does not depend on the split.
CoincidenceHistogram cross_correlogram(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                                       Picoseconds bin_width_ps, Picoseconds tau_min_ps, Picoseconds tau_max_ps,
                                       unsigned threads = 1);
CoincidenceHistogram cross_correlogram(const TimeTagStream& a, const TimeTagStream& b, Picoseconds bin_width_ps,
                                       Picoseconds tau_min_ps, Picoseconds tau_max_ps, unsigned threads = 1);

/// Pairs with |t_b - t_a - delay| <= width / 2 (closed window).
std::uint64_t coincidences_in_window(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                                     Picoseconds delay_ps, Picoseconds width_ps);
std::uint64_t coincidences_in_window(const TimeTagStream& a, const TimeTagStream& b, Picoseconds delay_ps,
                                     Picoseconds width_ps);

struct CarResult {
  double coincidence_rate_hz = 0.0;
  double accidental_rate_hz = 0.0;
  double car = 0.0;
  double car_sigma = 0.0;
  Picoseconds window_width_ps = 0;
  Picoseconds peak_delay_ps = 0;
  std::uint64_t coincidences = 0;
  std::uint64_t accidentals_total = 0;
  std::size_t accidental_windows = 0;
};

/// +-(10, 12, ..., 28) ns: twenty windows on both sides of the peak.
std::vector<Picoseconds> default_accidental_offsets();

/// CAR = C / mean(A). Offsets are relative to the peak delay. Windows may
/// touch but not overlap (centers at least one width apart). Throws
/// ZeroAccidentalsError when every accidental window is empty.
CarResult car(const TimeTagStream& a, const TimeTagStream& b, Picoseconds peak_delay_ps, Picoseconds window_ps,
              std::span<const Picoseconds> accidental_offsets_ps);

struct ThreefoldCounts {
  std::uint64_t herald_singles = 0;  // N_h
  std::uint64_t herald_arm1 = 0;     // heralds with >= 1 arm-1 partner
  std::uint64_t herald_arm2 = 0;
  std::uint64_t triples = 0;         // heralds with partners in both arms
  Picoseconds window_width_ps = 0;
  double duration_s = 0.0;
};

/// Herald-centric counting keeps N_h12 <= min(N_h1, N_h2) <= N_h. Arm
/// delays are the calibrated herald-to-arm peak positions.
ThreefoldCounts threefold_coincidences(std::span<const Picoseconds> herald, std::span<const Picoseconds> arm1,
                                       std::span<const Picoseconds> arm2, Picoseconds window_ps,
                                       Picoseconds arm1_delay_ps = 0, Picoseconds arm2_delay_ps = 0);
ThreefoldCounts threefold_coincidences(const TimeTagStream& herald, const TimeTagStream& arm1,
                                       const TimeTagStream& arm2, Picoseconds window_ps,
                                       Picoseconds arm1_delay_ps = 0, Picoseconds arm2_delay_ps = 0);

struct G2Point {
  double tau_ps = 0.0;
  double g2 = 0.0;
};

/// Divides every bin by the mean of the bins lying fully inside the baseline
/// regions. Needs >= 10 baseline bins with a nonzero mean.
std::vector<G2Point> g2_histogram_normalize(const CoincidenceHistogram& h,
                                            std::span<const std::pair<Picoseconds, Picoseconds>> baseline_regions);
std::vector<G2Point> g2_histogram_normalize(const CoincidenceHistogram& h,
                                            std::pair<Picoseconds, Picoseconds> baseline_region);

/// Argmax bin start plus half a bin (rounded down), from a coarse correlogram.
/// Throws Error(peak_not_found) if the correlogram is empty.
Picoseconds calibrate_peak_delay(const TimeTagStream& a, const TimeTagStream& b, Picoseconds tau_min_ps,
                                 Picoseconds tau_max_ps, Picoseconds bin_width_ps, unsigned threads = 1);

/// `bin_center_ps,counts`
void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& h);

}  // namespace qlight
