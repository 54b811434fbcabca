#include "qlight/coincidence.hpp"

#include "qlight/error.hpp"
#include "qlight/numfmt.hpp"
#include "qlight/parallel.hpp"
#include "qlight/poisson.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace qlight {

namespace {

void check_window(Picoseconds width_ps) {
  if (width_ps <= 0) throw Error(ErrorCode::invalid_argument, "coincidence window must be > 0");
}

// Histogram of b - a for a[first, last).
void correlate_range(std::span<const Picoseconds> a, std::span<const Picoseconds> b, std::size_t first,
                     std::size_t last, Picoseconds bw, Picoseconds tmin, Picoseconds tmax,
                     std::vector<std::uint64_t>& counts) {
  if (first >= last) return;
  auto lo = static_cast<std::size_t>(std::lower_bound(b.begin(), b.end(), a[first] + tmin) - b.begin());
  const std::size_t nb = b.size();
  for (std::size_t i = first; i < last; ++i) {
    const Picoseconds ta = a[i];
    const Picoseconds start = ta + tmin;
    const Picoseconds stop = ta + tmax;
    while (lo < nb && b[lo] < start) ++lo;
    for (std::size_t j = lo; j < nb && b[j] < stop; ++j) {
      ++counts[static_cast<std::size_t>((b[j] - start) / bw)];
    }
  }
}

}  // namespace

CoincidenceHistogram cross_correlogram(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                                       Picoseconds bin_width_ps, Picoseconds tau_min_ps, Picoseconds tau_max_ps,
                                       unsigned threads) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  if (bin_width_ps <= 0) throw Error(ErrorCode::invalid_argument, "bin width must be > 0");
  if (tau_max_ps <= tau_min_ps) throw Error(ErrorCode::invalid_argument, "histogram range must span >= 1 bin");
  if ((tau_max_ps - tau_min_ps) % bin_width_ps != 0) {
    throw Error(ErrorCode::invalid_argument, "histogram range is not a whole number of bins");
  }
  const auto nbins = static_cast<std::size_t>((tau_max_ps - tau_min_ps) / bin_width_ps);

  CoincidenceHistogram h;
  h.bin_width_ps = bin_width_ps;
  h.tau_min_ps = tau_min_ps;
  h.tau_max_ps = tau_max_ps;
  h.counts.assign(nbins, 0);

  // Chunks of roughly 64k heralds keep per-chunk histograms cheap to reduce.
  const std::size_t chunk_size = 1U << 16;
  const std::size_t chunks = threads > 1 ? (a.size() + chunk_size - 1) / chunk_size : 1;
  if (chunks <= 1) {
    correlate_range(a, b, 0, a.size(), bin_width_ps, tau_min_ps, tau_max_ps, h.counts);
  } else {
    std::vector<std::vector<std::uint64_t>> partial(chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
      partial[c].assign(nbins, 0);
      const std::size_t first = c * chunk_size;
      correlate_range(a, b, first, std::min(a.size(), first + chunk_size), bin_width_ps, tau_min_ps, tau_max_ps,
                      partial[c]);
    });
    for (const auto& p : partial) {
      for (std::size_t k = 0; k < nbins; ++k) h.counts[k] += p[k];
    }
  }
  for (auto c : h.counts) h.total_pairs_counted += c;
  return h;
}

CoincidenceHistogram cross_correlogram(const TimeTagStream& a, const TimeTagStream& b, Picoseconds bin_width_ps,
                                       Picoseconds tau_min_ps, Picoseconds tau_max_ps, unsigned threads) {
  auto h = cross_correlogram(a.tags(), b.tags(), bin_width_ps, tau_min_ps, tau_max_ps, threads);
  h.acquisition_duration_s = std::max(a.duration_s(), b.duration_s());
  return h;
}

std::uint64_t coincidences_in_window(std::span<const Picoseconds> a, std::span<const Picoseconds> b,
                                     Picoseconds delay_ps, Picoseconds width_ps) {
  require_sorted(a, "a");
  require_sorted(b, "b");
  check_window(width_ps);
  // For integer differences x, 2|x| <= w  <=>  |x| <= floor(w / 2).
  const Picoseconds half = width_ps / 2;
  std::size_t lo = 0;
  std::size_t hi = 0;
  std::uint64_t total = 0;
  for (const Picoseconds ta : a) {
    const Picoseconds center = ta + delay_ps;
    while (lo < b.size() && b[lo] < center - half) ++lo;
    if (hi < lo) hi = lo;
    while (hi < b.size() && b[hi] <= center + half) ++hi;
    total += hi - lo;
  }
  return total;
}

std::uint64_t coincidences_in_window(const TimeTagStream& a, const TimeTagStream& b, Picoseconds delay_ps,
                                     Picoseconds width_ps) {
  return coincidences_in_window(a.tags(), b.tags(), delay_ps, width_ps);
}

std::vector<Picoseconds> default_accidental_offsets() {
  std::vector<Picoseconds> offsets;
  for (Picoseconds ns = 10; ns <= 28; ns += 2) {
    offsets.push_back(-ns * 1000);
    offsets.push_back(ns * 1000);
  }
  std::sort(offsets.begin(), offsets.end());
  return offsets;
}

CarResult car(const TimeTagStream& a, const TimeTagStream& b, Picoseconds peak_delay_ps, Picoseconds window_ps,
              std::span<const Picoseconds> accidental_offsets_ps) {
  check_window(window_ps);
  if (accidental_offsets_ps.empty()) throw Error(ErrorCode::invalid_argument, "no accidental windows given");
  std::vector<Picoseconds> centers{0};
  centers.insert(centers.end(), accidental_offsets_ps.begin(), accidental_offsets_ps.end());
  std::sort(centers.begin(), centers.end());
  for (std::size_t i = 1; i < centers.size(); ++i) {
    if (centers[i] - centers[i - 1] < window_ps) {
      throw Error(ErrorCode::invalid_argument, "accidental windows overlap each other or the peak window");
    }
  }

  CarResult r;
  r.window_width_ps = window_ps;
  r.peak_delay_ps = peak_delay_ps;
  r.coincidences = coincidences_in_window(a, b, peak_delay_ps, window_ps);
  for (Picoseconds off : accidental_offsets_ps) r.accidentals_total += coincidences_in_window(a, b, peak_delay_ps + off, window_ps);
  r.accidental_windows = accidental_offsets_ps.size();
  if (r.accidentals_total == 0) throw ZeroAccidentalsError(static_cast<long long>(r.coincidences));

  const double duration = std::max(a.duration_s(), b.duration_s());
  const double c = static_cast<double>(r.coincidences);
  const double sum_a = static_cast<double>(r.accidentals_total);
  const double k = static_cast<double>(r.accidental_windows);
  const double mean_a = sum_a / k;
  r.coincidence_rate_hz = duration > 0.0 ? c / duration : 0.0;
  r.accidental_rate_hz = duration > 0.0 ? mean_a / duration : 0.0;
  r.car = c / mean_a;
  const double d_c = poisson_sigma(r.coincidences) / mean_a;
  const double d_a = c * k * poisson_sigma(r.accidentals_total) / (sum_a * sum_a);
  r.car_sigma = std::hypot(d_c, d_a);
  return r;
}

ThreefoldCounts threefold_coincidences(std::span<const Picoseconds> herald, std::span<const Picoseconds> arm1,
                                       std::span<const Picoseconds> arm2, Picoseconds window_ps,
                                       Picoseconds arm1_delay_ps, Picoseconds arm2_delay_ps) {
  require_sorted(herald, "herald");
  require_sorted(arm1, "arm1");
  require_sorted(arm2, "arm2");
  check_window(window_ps);
  const Picoseconds half = window_ps / 2;
  ThreefoldCounts r;
  r.window_width_ps = window_ps;
  r.herald_singles = herald.size();
  std::size_t p1 = 0;
  std::size_t p2 = 0;
  for (const Picoseconds th : herald) {
    const Picoseconds c1 = th + arm1_delay_ps;
    const Picoseconds c2 = th + arm2_delay_ps;
    while (p1 < arm1.size() && arm1[p1] < c1 - half) ++p1;
    while (p2 < arm2.size() && arm2[p2] < c2 - half) ++p2;
    const bool hit1 = p1 < arm1.size() && arm1[p1] <= c1 + half;
    const bool hit2 = p2 < arm2.size() && arm2[p2] <= c2 + half;
    r.herald_arm1 += hit1;
    r.herald_arm2 += hit2;
    r.triples += hit1 && hit2;
  }
  return r;
}

ThreefoldCounts threefold_coincidences(const TimeTagStream& herald, const TimeTagStream& arm1,
                                       const TimeTagStream& arm2, Picoseconds window_ps, Picoseconds arm1_delay_ps,
                                       Picoseconds arm2_delay_ps) {
  auto r = threefold_coincidences(herald.tags(), arm1.tags(), arm2.tags(), window_ps, arm1_delay_ps, arm2_delay_ps);
  r.duration_s = herald.duration_s();
  return r;
}

std::vector<G2Point> g2_histogram_normalize(const CoincidenceHistogram& h,
                                            std::span<const std::pair<Picoseconds, Picoseconds>> baseline_regions) {
  std::uint64_t sum = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    const Picoseconds lo = h.bin_start(k);
    const Picoseconds hi = lo + h.bin_width_ps;
    for (const auto& [r0, r1] : baseline_regions) {
      if (lo >= r0 && hi <= r1) {
        sum += h.counts[k];
        ++n;
        break;
      }
    }
  }
  if (n < 10) {
    throw Error(ErrorCode::insufficient_coverage,
                "baseline covers " + std::to_string(n) + " bins; at least 10 are required");
  }
  if (sum == 0) throw Error(ErrorCode::zero_denominator, "baseline region is empty");
  const double mean = static_cast<double>(sum) / static_cast<double>(n);
  std::vector<G2Point> out(h.size());
  for (std::size_t k = 0; k < h.size(); ++k) out[k] = {h.bin_center_ps(k), static_cast<double>(h.counts[k]) / mean};
  return out;
}

std::vector<G2Point> g2_histogram_normalize(const CoincidenceHistogram& h,
                                            std::pair<Picoseconds, Picoseconds> baseline_region) {
  return g2_histogram_normalize(h, std::span<const std::pair<Picoseconds, Picoseconds>>(&baseline_region, 1));
}

Picoseconds calibrate_peak_delay(const TimeTagStream& a, const TimeTagStream& b, Picoseconds tau_min_ps,
                                 Picoseconds tau_max_ps, Picoseconds bin_width_ps, unsigned threads) {
  const auto h = cross_correlogram(a, b, bin_width_ps, tau_min_ps, tau_max_ps, threads);
  if (h.total_pairs_counted == 0) throw Error(ErrorCode::peak_not_found, "correlogram is empty; no peak to calibrate");
  const auto k = static_cast<std::size_t>(std::max_element(h.counts.begin(), h.counts.end()) - h.counts.begin());
  return h.bin_start(k) + bin_width_ps / 2;
}

void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& h) {
  out << "bin_center_ps,counts\n";
  for (std::size_t k = 0; k < h.size(); ++k) out << num(h.bin_center_ps(k)) << ',' << h.counts[k] << '\n';
}

}  // namespace qlight
