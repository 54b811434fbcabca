#include "qlight/inference.hpp"

#include "qlight/error.hpp"
#include "qlight/numfmt.hpp"
#include "qlight/parallel.hpp"
#include "qlight/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

namespace qlight {

namespace {

std::vector<double> sigmas_from(const Eigen::MatrixXd& cov) {
  std::vector<double> s(static_cast<std::size_t>(cov.rows()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i) s[i] = std::sqrt(std::max(0.0, cov(i, i)));
  return s;
}

double wrap_phase(double x) {
  x = std::remainder(x, 2.0 * std::numbers::pi);
  return x <= -std::numbers::pi ? x + 2.0 * std::numbers::pi : x;
}

}  // namespace

// ---------------------------------------------------------------- power curve

FitResult fit_power_quadratic(std::span<const PowerPoint> points) {
  std::vector<std::size_t> used;
  std::set<double> powers;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!(p.power_mw >= 0.0) || !std::isfinite(p.rate_hz)) throw Error(ErrorCode::invalid_argument, "bad power point");
    if (p.sigma_hz > 0.0 && std::isfinite(p.sigma_hz)) {
      used.push_back(i);
      powers.insert(p.power_mw);
    }
  }
  if (used.empty()) throw Error(ErrorCode::invalid_argument, "all power points have zero weight");
  if (powers.size() < 3) {
    throw Error(ErrorCode::rank_deficient,
                std::to_string(powers.size()) + " distinct powers cannot determine a quadratic");
  }
  if (powers.size() < 4) throw Error(ErrorCode::invalid_argument, "power curve needs >= 4 distinct powers");

  const auto n = static_cast<Eigen::Index>(used.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& p = points[used[r]];
    x(r, 0) = p.power_mw;
    x(r, 1) = p.power_mw * p.power_mw;
    x(r, 2) = 1.0;
    y[r] = p.rate_hz;
    w[r] = 1.0 / (p.sigma_hz * p.sigma_hz);
  }
  const LinearFit full = weighted_linear_fit(x, y, w);

  // Non-negativity by exhaustive active sets: 8 candidates for 3 parameters.
  Eigen::Vector3d best = Eigen::Vector3d::Zero();
  double best_chi2 = std::numeric_limits<double>::infinity();
  for (unsigned mask = 1; mask < 8; ++mask) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index j = 0; j < 3; ++j) {
      if (mask & (1U << j)) free.push_back(j);
    }
    Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(free.size()));
    for (std::size_t k = 0; k < free.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = x.col(free[k]);
    LinearFit f;
    try {
      f = weighted_linear_fit(sub, y, w);
    } catch (const Error&) {
      continue;
    }
    if ((f.coefficients.array() < 0.0).any()) continue;
    if (f.chi2 < best_chi2) {
      best_chi2 = f.chi2;
      best.setZero();
      for (std::size_t k = 0; k < free.size(); ++k) best[free[k]] = f.coefficients[static_cast<Eigen::Index>(k)];
    }
  }
  if (!std::isfinite(best_chi2)) {
    best_chi2 = (w.cwiseSqrt().asDiagonal() * y).squaredNorm();
  }

  FitResult r;
  r.names = {"a", "b", "c"};
  r.parameters = {best[0], best[1], best[2]};
  Eigen::MatrixXd cov = full.covariance;
  const double dof = static_cast<double>(n - 3);
  if (dof > 0.0) cov *= std::max(1.0, full.chi2 / dof);
  r.sigmas = sigmas_from(cov);
  r.residual_rms = std::sqrt(best_chi2 / static_cast<double>(n));
  r.iterations = 1;
  r.converged = true;
  return r;
}

// ------------------------------------------------------------------------ g2

namespace {

// exp(z^2) erfc(z), stable for large positive z.
double erfcx(double z) {
  if (z < 25.0) return std::exp(z * z) * std::erfc(z);
  const double z2 = z * z;
  return (1.0 - 0.5 / z2 + 0.75 / (z2 * z2)) / (z * std::sqrt(std::numbers::pi));
}

// exp(-|x| / lambda) convolved with a unit-area Gaussian of width sigma.
double laplace_gauss(double x, double lambda, double sigma) {
  if (sigma <= 0.0) return std::exp(-std::fabs(x) / lambda);
  const double g = std::exp(-x * x / (2.0 * sigma * sigma));
  const double s = sigma / lambda;
  const double zp = (s * sigma + x) / (std::numbers::sqrt2 * sigma);
  const double zm = (s * sigma - x) / (std::numbers::sqrt2 * sigma);
  auto term = [&](double z, double xx) {
    // exp(s^2/2 -+ x/lambda) erfc(z) rewritten through erfcx for stability.
    return z > 0.0 ? g * erfcx(z) : std::exp(0.5 * s * s + xx / lambda) * std::erfc(z);
  };
  return 0.5 * (term(zm, -x) + term(zp, x));
}

double g2_shape(double tau, double tau0, double tau_c, const G2FitOptions& o) {
  const double lambda = tau_c / 2.0;
  if (o.bin_width_ps <= 0.0) return laplace_gauss(tau - tau0, lambda, o.irf_sigma_ps);
  // Simpson over the bin.
  constexpr int kSub = 16;
  const double h = o.bin_width_ps / kSub;
  const double a = tau - 0.5 * o.bin_width_ps - tau0;
  double sum = 0.0;
  for (int i = 0; i <= kSub; ++i) {
    const double wgt = (i == 0 || i == kSub) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += wgt * laplace_gauss(a + i * h, lambda, o.irf_sigma_ps);
  }
  return sum * h / 3.0 / o.bin_width_ps;
}

}  // namespace

G2Result fit_g2_double_exponential(std::span<const G2Point> points, const G2FitOptions& options) {
  if (points.size() < 8) throw Error(ErrorCode::insufficient_coverage, "g2 fit needs at least 8 points");
  std::vector<G2Point> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const G2Point& a, const G2Point& b) { return a.tau_ps < b.tau_ps; });

  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(p.g2);
  std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2), vals.end());
  const double median = vals[vals.size() / 2];
  const auto peak = std::max_element(pts.begin(), pts.end(), [](const G2Point& a, const G2Point& b) { return a.g2 < b.g2; });
  const double a0 = peak->g2 - std::max(1.0, median);
  if (!(a0 > 0.0)) throw Error(ErrorCode::peak_not_found, "no bunching peak above the g2 = 1 baseline");

  double half_width = 0.0;
  for (const auto& p : pts) {
    if (p.g2 - 1.0 >= 0.5 * a0) half_width = std::max(half_width, std::fabs(p.tau_ps - peak->tau_ps));
  }
  const double spacing = (pts.back().tau_ps - pts.front().tau_ps) / static_cast<double>(pts.size() - 1);
  const double tau_c0 = std::max(2.0 * half_width, spacing) / std::numbers::ln2;

  const auto m = static_cast<int>(pts.size());
  LmProblem prob;
  prob.residual_count = m;
  prob.residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) r[i] = pts[i].g2 - (1.0 + p[0] * g2_shape(pts[i].tau_ps, p[1], p[2], options));
    return r;
  };
  prob.admissible = [](const Eigen::VectorXd& p) { return p[2] > 0.0; };
  const LmSolution sol = levenberg_marquardt(prob, Eigen::Vector3d(a0, peak->tau_ps, tau_c0));
  const double amp = sol.parameters[0];
  const double tau0 = sol.parameters[1];
  const double tau_c = sol.parameters[2];
  if (!(amp > 0.0)) throw Error(ErrorCode::peak_not_found, "fitted bunching amplitude is not positive");
  if (tau0 - pts.front().tau_ps < 5.0 * tau_c || pts.back().tau_ps - tau0 < 5.0 * tau_c) {
    throw Error(ErrorCode::insufficient_coverage, "g2 points must span >= 5 coherence times on both sides of the peak");
  }

  G2Result r;
  r.fit.names = {"A", "tau0_ps", "tau_c_ps"};
  r.fit.parameters = {amp, tau0, tau_c};
  r.fit.sigmas = sigmas_from(sol.covariance);
  r.fit.residual_rms = std::sqrt(sol.cost / m);
  r.fit.iterations = sol.iterations;
  r.fit.converged = sol.converged;
  r.g2_zero = 1.0 + amp;
  r.sigma = r.fit.sigmas[0];
  r.coherence_time_s = tau_c * 1e-12;
  r.effective_modes = effective_modes(r.g2_zero);
  return r;
}

double effective_modes(double g2_zero) {
  return g2_zero > 1.0 ? 1.0 / (g2_zero - 1.0) : std::numeric_limits<double>::infinity();
}

HeraldedG2Result heralded_g2(const ThreefoldCounts& c) {
  if (c.herald_arm1 == 0 || c.herald_arm2 == 0) {
    throw Error(ErrorCode::zero_denominator, "heralded g2 needs two-fold coincidences in both arms");
  }
  const double nh = static_cast<double>(c.herald_singles);
  const double n1 = static_cast<double>(c.herald_arm1);
  const double n2 = static_cast<double>(c.herald_arm2);
  const double n12 = static_cast<double>(c.triples);
  HeraldedG2Result r;
  r.g2h_zero = n12 * nh / (n1 * n2);
  const double d12 = poisson_sigma(c.triples) * nh / (n1 * n2);
  const double rel = 1.0 / nh + 1.0 / n1 + 1.0 / n2;
  r.sigma = std::sqrt(d12 * d12 + r.g2h_zero * r.g2h_zero * rel);
  r.heralding_rate_hz = c.duration_s > 0.0 ? nh / c.duration_s : 0.0;
  return r;
}

// -------------------------------------------------------------------- fringes

void FringeScan::validate() const {
  if (points.size() < 8) throw Error(ErrorCode::insufficient_coverage, "fringe scan needs >= 8 points");
  double lo = points.front().phase_rad;
  double hi = lo;
  for (const auto& p : points) {
    if (!(p.dwell_s > 0.0)) throw Error(ErrorCode::invalid_argument, "fringe dwell must be > 0");
    if (!std::isfinite(p.phase_rad)) throw Error(ErrorCode::invalid_argument, "fringe phase must be finite");
    lo = std::min(lo, p.phase_rad);
    hi = std::max(hi, p.phase_rad);
  }
  // Evenly spaced points cover a period when span * n / (n - 1) reaches it.
  const double n = static_cast<double>(points.size());
  if ((hi - lo) * n / (n - 1.0) < std::numbers::pi * (1.0 - 1e-9)) {
    throw Error(ErrorCode::insufficient_coverage, "fringe scan must span one two-photon period (pi rad)");
  }
}

void write_fringe_csv(std::ostream& out, const FringeScan& scan) {
  out << "phase_rad,coincidences,singles_a,singles_b,dwell_s\n";
  for (const auto& p : scan.points) {
    out << num(p.phase_rad) << ',' << p.coincidences << ',' << p.singles_a << ',' << p.singles_b << ','
        << num(p.dwell_s) << '\n';
  }
}

FringeScan read_fringe_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io, "empty fringe CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "phase_rad,coincidences,singles_a,singles_b,dwell_s") {
    throw Error(ErrorCode::io, "unexpected fringe CSV header '" + line + "'");
  }
  FringeScan scan;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    FringePoint p;
    if (!(ss >> p.phase_rad >> p.coincidences >> p.singles_a >> p.singles_b >> p.dwell_s)) {
      throw Error(ErrorCode::io, "malformed fringe CSV line " + std::to_string(lineno));
    }
    scan.points.push_back(p);
  }
  return scan;
}

FringeScan read_fringe_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_fringe_csv(in);
}

namespace {

struct SineData {
  std::vector<double> phase;
  std::vector<double> counts;
  std::vector<double> exposure;
  std::vector<double> sigma;
};

struct SineFit {
  double r0 = 0.0;
  double v = 0.0;
  double psi = 0.0;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  double cost = 0.0;
  int iterations = 0;
};

// Linear least squares of counts / exposure on [1, cos k phi, sin k phi].
Eigen::Vector3d linear_sine(const SineData& d, double k, double* chi2 = nullptr) {
  const auto n = static_cast<Eigen::Index>(d.phase.size());
  Eigen::MatrixXd x(n, 3);
  Eigen::VectorXd y(n);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = d.exposure[i];
    x(i, 1) = d.exposure[i] * std::cos(k * d.phase[i]);
    x(i, 2) = d.exposure[i] * std::sin(k * d.phase[i]);
    y[i] = d.counts[i];
    w[i] = 1.0 / (d.sigma[i] * d.sigma[i]);
  }
  const LinearFit f = weighted_linear_fit(x, y, w);
  if (chi2) *chi2 = f.chi2;
  return f.coefficients;
}

SineFit fit_sine_fixed(const SineData& d, double k) {
  const Eigen::Vector3d lin = linear_sine(d, k);
  double r0 = lin[0];
  if (!(r0 > 0.0)) throw Error(ErrorCode::non_convergence, "fringe mean level is not positive");
  double v = std::hypot(lin[1], lin[2]) / r0;
  double psi = std::atan2(-lin[2], lin[1]);

  const auto n = static_cast<int>(d.phase.size());
  LmProblem prob;
  prob.residual_count = n;
  prob.residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      const double m = d.exposure[i] * p[0] * (1.0 + p[1] * std::cos(k * d.phase[i] + p[2]));
      r[i] = (d.counts[i] - m) / d.sigma[i];
    }
    return r;
  };
  prob.jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(n, 3);
    for (int i = 0; i < n; ++i) {
      const double c = std::cos(k * d.phase[i] + p[2]);
      const double s = std::sin(k * d.phase[i] + p[2]);
      const double e = d.exposure[i] / d.sigma[i];
      j(i, 0) = -e * (1.0 + p[1] * c);
      j(i, 1) = -e * p[0] * c;
      j(i, 2) = e * p[0] * p[1] * s;
    }
    return j;
  };
  LmOptions opt;
  opt.scale_covariance = false;  // residuals are already in units of sigma
  if (v < 1e-12) v = 1e-12;
  const LmSolution sol = levenberg_marquardt(prob, Eigen::Vector3d(r0, v, psi), opt);

  SineFit f;
  f.r0 = sol.parameters[0];
  f.v = sol.parameters[1];
  f.psi = sol.parameters[2];
  if (f.v < 0.0) {
    f.v = -f.v;
    f.psi += std::numbers::pi;
  }
  f.psi = wrap_phase(f.psi);
  f.cov = sol.covariance;
  f.cost = sol.cost;
  f.iterations = sol.iterations;
  return f;
}

SineData data_from_scan(const FringeScan& scan, std::span<const double> accidentals = {}) {
  SineData d;
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    const auto& p = scan.points[i];
    const double acc = accidentals.empty() ? 0.0 : accidentals[i];
    d.phase.push_back(p.phase_rad);
    d.counts.push_back(static_cast<double>(p.coincidences) - acc);
    d.exposure.push_back(p.dwell_s);
    d.sigma.push_back(accidentals.empty() ? poisson_sigma(p.coincidences)
                                          : std::max(1.0, std::sqrt(static_cast<double>(p.coincidences) + acc)));
  }
  return d;
}

VisibilityResult to_visibility(const SineFit& f, std::size_t n) {
  VisibilityResult r;
  r.visibility = f.v;
  r.sigma = std::sqrt(std::max(0.0, f.cov(1, 1)));
  r.phase_offset = f.psi;
  r.mean_rate_hz = f.r0;
  r.fit.names = {"R0_hz", "V", "phi0"};
  r.fit.parameters = {f.r0, f.v, f.psi};
  r.fit.sigmas = sigmas_from(f.cov);
  r.fit.residual_rms = std::sqrt(f.cost / static_cast<double>(n));
  r.fit.iterations = f.iterations;
  r.fit.converged = true;
  return r;
}

}  // namespace

VisibilityResult fit_fringe(const FringeScan& scan) {
  scan.validate();
  return to_visibility(fit_sine_fixed(data_from_scan(scan), 2.0), scan.points.size());
}

VisibilityResult fit_fringe_accidental_subtracted(const FringeScan& scan, std::span<const double> accidentals) {
  scan.validate();
  if (accidentals.size() != scan.points.size()) {
    throw Error(ErrorCode::invalid_argument, "one accidental count per fringe point is required");
  }
  return to_visibility(fit_sine_fixed(data_from_scan(scan, accidentals), 2.0), scan.points.size());
}

VisibilityResult monte_carlo_visibility(const FringeScan& scan, int iterations, std::uint64_t seed,
                                        unsigned threads) {
  if (iterations < 2) throw Error(ErrorCode::invalid_argument, "Monte Carlo needs >= 2 iterations");
  const VisibilityResult base = fit_fringe(scan);
  std::vector<double> vs(static_cast<std::size_t>(iterations), std::numeric_limits<double>::quiet_NaN());
  parallel_for(vs.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    FringeScan resampled = scan;
    for (auto& p : resampled.points) p.coincidences = rng.poisson(static_cast<double>(p.coincidences));
    try {
      vs[i] = fit_fringe(resampled).visibility;
    } catch (const Error&) {
    }
  });
  double sum = 0.0;
  std::size_t ok = 0;
  for (double v : vs) {
    if (std::isfinite(v)) {
      sum += v;
      ++ok;
    }
  }
  const std::size_t failed = vs.size() - ok;
  if (failed * 10 > vs.size() || ok < 2) {
    throw Error(ErrorCode::non_convergence,
                std::to_string(failed) + " of " + std::to_string(vs.size()) + " Monte Carlo refits failed");
  }
  const double mean = sum / static_cast<double>(ok);
  double ss = 0.0;
  for (double v : vs) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  VisibilityResult r = base;
  r.visibility = mean;
  r.sigma = std::sqrt(ss / static_cast<double>(ok - 1));
  return r;
}

FitResult single_photon_fringe_fit(std::span<const PhaseCount> points) {
  if (points.size() < 8) throw Error(ErrorCode::insufficient_coverage, "single-photon fringe needs >= 8 points");
  SineData d;
  double lo = points.front().phase_rad;
  double hi = lo;
  for (const auto& p : points) {
    d.phase.push_back(p.phase_rad);
    d.counts.push_back(p.counts);
    d.exposure.push_back(1.0);
    d.sigma.push_back(p.counts > 1.0 ? std::sqrt(p.counts) : 1.0);
    lo = std::min(lo, p.phase_rad);
    hi = std::max(hi, p.phase_rad);
  }
  const double n = static_cast<double>(points.size());
  if ((hi - lo) * n / (n - 1.0) < 2.0 * std::numbers::pi * (1.0 - 1e-9)) {
    throw Error(ErrorCode::insufficient_coverage, "single-photon fringe must span one period (2 pi rad)");
  }
  const SineFit f = fit_sine_fixed(d, 1.0);
  FitResult r;
  r.names = {"S0", "v", "psi"};
  r.parameters = {f.r0, f.v, f.psi};
  r.sigmas = sigmas_from(f.cov);
  r.residual_rms = std::sqrt(f.cost / n);
  r.iterations = f.iterations;
  r.converged = true;
  return r;
}

FitResult fit_fringe_frequency(std::span<const PhaseCount> points, std::span<const double> exposure) {
  if (points.size() < 8) throw Error(ErrorCode::insufficient_coverage, "frequency fit needs >= 8 points");
  if (!exposure.empty() && exposure.size() != points.size()) {
    throw Error(ErrorCode::invalid_argument, "exposure must match the number of points");
  }
  SineData d;
  for (std::size_t i = 0; i < points.size(); ++i) {
    d.phase.push_back(points[i].phase_rad);
    d.counts.push_back(points[i].counts);
    d.exposure.push_back(exposure.empty() ? 1.0 : exposure[i]);
    d.sigma.push_back(points[i].counts > 1.0 ? std::sqrt(points[i].counts) : 1.0);
  }

  // Coarse scan of the frequency by linear chi^2, then a joint refinement.
  double best_k = 1.0;
  double best_chi2 = std::numeric_limits<double>::infinity();
  for (double k = 0.5; k <= 4.0 + 1e-12; k += 0.005) {
    double chi2 = 0.0;
    try {
      linear_sine(d, k, &chi2);
    } catch (const Error&) {
      continue;
    }
    if (chi2 < best_chi2) {
      best_chi2 = chi2;
      best_k = k;
    }
  }
  const SineFit start = fit_sine_fixed(d, best_k);

  const auto n = static_cast<int>(d.phase.size());
  LmProblem prob;
  prob.residual_count = n;
  prob.residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) {
      const double m = d.exposure[i] * p[0] * (1.0 + p[1] * std::cos(p[2] * d.phase[i] + p[3]));
      r[i] = (d.counts[i] - m) / d.sigma[i];
    }
    return r;
  };
  LmOptions opt;
  opt.scale_covariance = false;
  const LmSolution sol = levenberg_marquardt(prob, Eigen::Vector4d(start.r0, start.v, best_k, start.psi), opt);

  FitResult r;
  r.names = {"R0", "V", "k", "psi"};
  r.parameters = {sol.parameters[0], std::fabs(sol.parameters[1]), sol.parameters[2],
                  wrap_phase(sol.parameters[3] + (sol.parameters[1] < 0.0 ? std::numbers::pi : 0.0))};
  r.sigmas = sigmas_from(sol.covariance);
  r.residual_rms = std::sqrt(sol.cost / n);
  r.iterations = sol.iterations;
  r.converged = sol.converged;
  return r;
}

}  // namespace qlight
