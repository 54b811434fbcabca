#pragma once

// Parameter estimation: power-curve decomposition, g2 fits, heralded g2,
// two-photon fringe fits with bootstrap errors.

#include "qlight/coincidence.hpp"
#include "qlight/fit.hpp"
#include "qlight/poisson.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace qlight {

struct PowerPoint {
  double power_mw = 0.0;
  double rate_hz = 0.0;
  double sigma_hz = 0.0;
};

/// N = a P + b P^2 + c with a, b, c >= 0. The bounded solution is the best
/// feasible active set; sigmas come from the unconstrained covariance.
FitResult fit_power_quadratic(std::span<const PowerPoint> points);

struct G2Result {
  double g2_zero = 0.0;
  double sigma = 0.0;
  double coherence_time_s = 0.0;
  double effective_modes = 0.0;
  FitResult fit;  // A, tau0_ps, tau_c_ps
};

struct G2FitOptions {
  /// When > 0 the model is averaged over each histogram bin.
  double bin_width_ps = 0.0;
  /// Known Gaussian timing response of the detector pair (combined sigma).
  double irf_sigma_ps = 0.0;
};

/// g2(tau) = 1 + A exp(-2 |tau - tau0| / tau_c), optionally convolved with
/// the timing response.
G2Result fit_g2_double_exponential(std::span<const G2Point> points, const G2FitOptions& options = {});

/// N = 1 / (g2(0) - 1); infinite when g2(0) <= 1.
double effective_modes(double g2_zero);

struct HeraldedG2Result {
  double g2h_zero = 0.0;
  double sigma = 0.0;
  double heralding_rate_hz = 0.0;
};

/// N_h12 N_h / (N_h1 N_h2). Throws Error(zero_denominator) if N_h1 or N_h2 is 0.
HeraldedG2Result heralded_g2(const ThreefoldCounts& counts);

struct FringePoint {
  double phase_rad = 0.0;
  std::uint64_t coincidences = 0;
  std::uint64_t singles_a = 0;
  std::uint64_t singles_b = 0;
  double dwell_s = 0.0;
};

struct FringeScan {
  std::vector<FringePoint> points;

  /// >= 8 points covering one two-photon period (pi in phase), dwell > 0.
  void validate() const;
};

/// `phase_rad,coincidences,singles_a,singles_b,dwell_s`
void write_fringe_csv(std::ostream& out, const FringeScan& scan);
FringeScan read_fringe_csv(std::istream& in);
FringeScan read_fringe_csv(const std::filesystem::path& path);

struct VisibilityResult {
  double visibility = 0.0;
  double sigma = 0.0;
  double phase_offset = 0.0;
  double mean_rate_hz = 0.0;
  FitResult fit;  // R0_hz, V, phi0
};

/// Raw counts, R(phi) = R0 (1 + V cos(2 phi + phi0)), Poisson weighted.
VisibilityResult fit_fringe(const FringeScan& scan);

/// Same model after subtracting per-point accidental counts. Reporting only.
VisibilityResult fit_fringe_accidental_subtracted(const FringeScan& scan, std::span<const double> accidentals);

/// Parametric Poisson bootstrap: each iteration redraws every coincidence
/// count with its observed value as mean and refits. Iteration i uses
/// sub-seed derive_seed(seed, i), so results do not depend on `threads`.
/// Throws Error(non_convergence) if more than 10% of refits fail.
VisibilityResult monte_carlo_visibility(const FringeScan& scan, int iterations, std::uint64_t seed,
                                        unsigned threads = 1);

struct PhaseCount {
  double phase_rad = 0.0;
  double counts = 0.0;
};

/// S(phi) = S0 (1 + v cos(phi + psi)).
FitResult single_photon_fringe_fit(std::span<const PhaseCount> points);

/// Free-frequency fringe fit: R0 (1 + V cos(k phi + psi)) with k located by
/// a coarse scan over [0.5, 4] and then refined. Returns R0, V, k, psi.
FitResult fit_fringe_frequency(std::span<const PhaseCount> points, std::span<const double> exposure = {});

}  // namespace qlight
