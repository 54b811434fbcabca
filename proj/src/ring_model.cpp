#include "qlight/ring_model.hpp"

#include "qlight/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <string>

namespace qlight {

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::invalid_argument, msg); }

double comb_offset_hz(const ResonatorSpec& spec, int mu) {
  const double m = mu;
  return spec.fsr_hz * m + (spec.d2 * m * m / 2.0 + spec.d3 * m * m * m / 6.0) / kTwoPi;
}

double lorentzian(double detuning, double fwhm) {
  const double x = 2.0 * detuning / fwhm;
  return 1.0 / (1.0 + x * x);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

void ResonatorSpec::validate() const {
  if (!(center_frequency_hz > 0)) invalid("center_frequency must be > 0");
  if (!(fsr_hz > 0)) invalid("fsr must be > 0");
  if (!(q_loaded > 0)) invalid("q_loaded must be > 0");
  if (!(extinction > 0 && extinction <= 1)) invalid("extinction must be in (0, 1]");
  if (!(radius_m > 0)) invalid("radius must be > 0");
  if (!std::isfinite(d2) || !std::isfinite(d3)) invalid("dispersion coefficients must be finite");
}

double beta2_from_d2(double d2, double d1, double group_index) {
  return -(group_index / kSpeedOfLight) * d2 / (d1 * d1);
}

double d2_from_beta2(double beta2, double d1, double group_index) {
  return -beta2 * kSpeedOfLight * d1 * d1 / group_index;
}

std::vector<CombResonance> resonance_grid(const ResonatorSpec& spec, int mu_min, int mu_max) {
  spec.validate();
  if (mu_min > mu_max) invalid("resonance_grid: mu_min > mu_max");
  std::vector<CombResonance> grid;
  grid.reserve(static_cast<std::size_t>(mu_max - mu_min + 1));
  for (int mu = mu_min; mu <= mu_max; ++mu) {
    CombResonance r;
    r.mode_index = mu;
    r.offset_hz = mu == 0 ? 0.0 : comb_offset_hz(spec, mu);
    r.frequency_hz = mu == 0 ? spec.center_frequency_hz : spec.center_frequency_hz + r.offset_hz;
    if (!(r.frequency_hz > 0)) {
      throw Error(ErrorCode::out_of_range, "resonance_grid: mode " + std::to_string(mu) + " has non-positive frequency");
    }
    r.linewidth_fwhm_hz = spec.linewidth_hz(r.frequency_hz);
    if (!grid.empty() && !(r.frequency_hz > grid.back().frequency_hz)) {
      throw Error(ErrorCode::out_of_range, "resonance_grid: frequencies not increasing at mode " + std::to_string(mu) +
                                               " (dispersion too large for the span)");
    }
    grid.push_back(r);
  }
  return grid;
}

double integrated_dispersion(const ResonatorSpec& spec, int mu) {
  return kTwoPi * comb_offset_hz(spec, mu) - spec.d1() * mu;
}

double transmission(const ResonatorSpec& spec, double frequency_hz) {
  const double guess = std::round((frequency_hz - spec.center_frequency_hz) / spec.fsr_hz);
  const int mu0 = static_cast<int>(guess);
  double best_detuning = 0.0;
  double best_center = 0.0;
  bool first = true;
  for (int mu = mu0 - 1; mu <= mu0 + 1; ++mu) {
    const double offset = mu == 0 ? 0.0 : comb_offset_hz(spec, mu);
    const double detuning = (frequency_hz - spec.center_frequency_hz) - offset;
    if (first || std::fabs(detuning) < std::fabs(best_detuning)) {
      best_detuning = detuning;
      best_center = spec.center_frequency_hz + offset;
      first = false;
    }
  }
  const double t = 1.0 - spec.extinction * lorentzian(best_detuning, spec.linewidth_hz(best_center));
  return std::clamp(t, 0.0, 1.0);
}

FitResult fit_resonance(std::span<const TransmissionPoint> trace_in) {
  if (trace_in.size() < 20) invalid("fit_resonance: need at least 20 points");
  std::vector<TransmissionPoint> trace(trace_in.begin(), trace_in.end());
  std::sort(trace.begin(), trace.end(),
            [](const auto& a, const auto& b) { return a.frequency_hz < b.frequency_hz; });
  const std::size_t n = trace.size();

  std::size_t imin = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (trace[i].transmission < trace[imin].transmission) imin = i;
  }
  if (imin == 0 || imin == n - 1) throw Error(ErrorCode::no_dip_found, "fit_resonance: minimum at trace edge (monotone trace)");

  // Noise scale from second differences, which cancel the smooth line shape.
  std::vector<double> d2;
  d2.reserve(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    d2.push_back(std::fabs(trace[i + 1].transmission - 2.0 * trace[i].transmission + trace[i - 1].transmission));
  }
  const double noise = median(d2) / (0.6745 * std::sqrt(6.0));
  const std::size_t edge = std::max<std::size_t>(2, n / 10);
  std::vector<double> edges;
  for (std::size_t i = 0; i < edge; ++i) {
    edges.push_back(trace[i].transmission);
    edges.push_back(trace[n - 1 - i].transmission);
  }
  const double baseline = median(edges);
  const double depth = baseline - trace[imin].transmission;
  if (!(depth > 1e-9) || depth < 3.0 * noise) {
    throw Error(ErrorCode::no_dip_found, "fit_resonance: dip depth below 3x residual noise");
  }

  const double level = 1.0 - (1.0 - trace[imin].transmission) / 2.0;
  std::size_t left = imin;
  while (left > 0 && trace[left].transmission < level) --left;
  std::size_t right = imin;
  while (right + 1 < n && trace[right].transmission < level) ++right;
  const double min_step = (trace[n - 1].frequency_hz - trace[0].frequency_hz) / static_cast<double>(n - 1);
  const double width0 = std::max(trace[right].frequency_hz - trace[left].frequency_hz, 2.0 * min_step);
  const double span = trace[n - 1].frequency_hz - trace[0].frequency_hz;
  if (span < 3.0 * width0) invalid("fit_resonance: trace must cover at least 3 linewidths");

  const double ref = trace[imin].frequency_hz;
  Eigen::VectorXd x(static_cast<Eigen::Index>(n));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    x[static_cast<Eigen::Index>(i)] = trace[i].frequency_hz - ref;
    y[static_cast<Eigen::Index>(i)] = trace[i].transmission;
  }

  LmProblem problem;
  problem.residual_count = static_cast<int>(n);
  problem.residuals = [&](const Eigen::VectorXd& p) {
    Eigen::VectorXd r(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) r[i] = 1.0 - p[2] * lorentzian(x[i] - p[0], p[1]) - y[i];
    return r;
  };
  problem.jacobian = [&](const Eigen::VectorXd& p) {
    Eigen::MatrixXd j(x.size(), 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double u = 2.0 * (x[i] - p[0]) / p[1];
      const double den = 1.0 + u * u;
      j(i, 0) = -4.0 * p[2] * u / (p[1] * den * den);
      j(i, 1) = -2.0 * p[2] * u * u / (p[1] * den * den);
      j(i, 2) = -1.0 / den;
    }
    return j;
  };
  problem.admissible = [](const Eigen::VectorXd& p) { return p[1] > 0 && p[2] > 0 && p[2] <= 2.0; };

  Eigen::VectorXd start(3);
  start << 0.0, width0, std::min(1.0, 1.0 - trace[imin].transmission);
  const LmSolution sol = levenberg_marquardt(problem, start);

  const double center = ref + sol.parameters[0];
  const double width = sol.parameters[1];
  const double s_center = std::sqrt(std::max(0.0, sol.covariance(0, 0)));
  const double s_width = std::sqrt(std::max(0.0, sol.covariance(1, 1)));
  const double q = center / width;

  FitResult out;
  out.names = {"center_frequency_hz", "q_loaded", "extinction", "linewidth_hz"};
  out.parameters = {center, q, sol.parameters[2], width};
  out.sigmas = {s_center, q * std::hypot(s_width / width, s_center / center),
                std::sqrt(std::max(0.0, sol.covariance(2, 2))), s_width};
  out.residual_rms = std::sqrt(sol.cost / static_cast<double>(n));
  out.iterations = sol.iterations;
  out.converged = sol.converged;
  return out;
}

FitResult fit_dispersion(std::span<const ModeFrequency> resonances, double group_index) {
  std::set<int> distinct;
  for (const auto& r : resonances) distinct.insert(r.mu);
  if (distinct.size() < 4) {
    throw Error(ErrorCode::rank_deficient, "fit_dispersion: need at least 4 distinct mode indices for a cubic fit");
  }
  if (resonances.size() < 7) invalid("fit_dispersion: need at least 7 resonances");
  if (!(group_index > 0)) invalid("fit_dispersion: group index must be > 0");

  // Reference on the resonance closest to mu = 0 to keep the design well conditioned.
  const auto ref_it = std::min_element(resonances.begin(), resonances.end(),
                                       [](const auto& a, const auto& b) { return std::abs(a.mu) < std::abs(b.mu); });
  const double ref_hz = ref_it->frequency_hz;

  const auto m = static_cast<Eigen::Index>(resonances.size());
  Eigen::MatrixXd design(m, 4);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double mu = resonances[static_cast<std::size_t>(i)].mu;
    design(i, 0) = 1.0;
    design(i, 1) = mu;
    design(i, 2) = mu * mu / 2.0;
    design(i, 3) = mu * mu * mu / 6.0;
    y[i] = kTwoPi * (resonances[static_cast<std::size_t>(i)].frequency_hz - ref_hz);
  }
  const LinearFit lin = weighted_linear_fit(design, y, Eigen::VectorXd::Ones(m));
  const Eigen::Index dof = m - 4;
  const double scale = dof > 0 ? lin.chi2 / static_cast<double>(dof) : 0.0;
  const Eigen::MatrixXd cov = lin.covariance * scale;

  const Eigen::VectorXd& c = lin.coefficients;
  const double d1 = c[1];
  const double d2 = c[2];
  const double d3 = c[3];
  const double beta2 = beta2_from_d2(d2, d1, group_index);
  Eigen::Vector4d grad = Eigen::Vector4d::Zero();
  grad[1] = 2.0 * (group_index / kSpeedOfLight) * d2 / (d1 * d1 * d1);
  grad[2] = -(group_index / kSpeedOfLight) / (d1 * d1);
  const double s_beta2 = std::sqrt(std::max(0.0, double(grad.transpose() * cov * grad)));

  FitResult out;
  out.names = {"center_frequency_hz", "d1", "d2", "d3", "beta2"};
  // c0 is 2pi (nu(mu = 0) - ref).
  out.parameters = {ref_hz + c[0] / kTwoPi, d1, d2, d3, beta2};
  out.sigmas = {std::sqrt(std::max(0.0, cov(0, 0))) / kTwoPi, std::sqrt(std::max(0.0, cov(1, 1))),
                std::sqrt(std::max(0.0, cov(2, 2))), std::sqrt(std::max(0.0, cov(3, 3))), s_beta2};
  out.residual_rms = std::sqrt(lin.chi2 / static_cast<double>(m));
  out.iterations = 1;
  out.converged = true;
  return out;
}

const std::map<int, std::pair<double, double>>& measured_pair_wavelengths() {
  static const std::map<int, std::pair<double, double>> table = {
      {2, {1544.80, 1555.44}}, {3, {1542.16, 1558.13}}, {4, {1539.53, 1560.82}}, {5, {1536.91, 1563.52}},
      {6, {1534.30, 1566.23}}, {7, {1531.70, 1568.96}}, {8, {1529.11, 1571.69}},
  };
  return table;
}

void ChannelPlan::validate() const {
  for (const auto& p : pairs) {
    if (p.index < kMinIndex || p.index > kMaxIndex) {
      throw Error(ErrorCode::out_of_range, "channel index " + std::to_string(p.index) + " outside [2, 8]");
    }
    if (!(p.signal.width_hz > 0) || !(p.idler.width_hz > 0)) invalid("channel widths must be > 0");
    const double mismatch = p.signal.center_hz + p.idler.center_hz - 2.0 * pump.center_hz;
    if (std::fabs(mismatch) > tolerance_hz) {
      throw Error(ErrorCode::invalid_argument, "channel pair " + std::to_string(p.index) +
                                                   " violates energy conservation by " + std::to_string(mismatch) + " Hz");
    }
  }
}

bool ChannelPlan::contains(int index) const {
  return std::any_of(pairs.begin(), pairs.end(), [&](const ChannelPair& p) { return p.index == index; });
}

ChannelPlan build_channel_plan(const ResonatorSpec& spec, std::span<const int> indices, double width_hz,
                               const std::map<int, std::pair<double, double>>& labels) {
  ChannelPlan plan;
  plan.pump = {spec.center_frequency_hz, width_hz, hz_to_wavelength_nm(spec.center_frequency_hz)};
  plan.tolerance_hz = spec.linewidth_hz(spec.center_frequency_hz);
  for (int i : indices) {
    if (i < ChannelPlan::kMinIndex || i > ChannelPlan::kMaxIndex) {
      throw Error(ErrorCode::out_of_range, "channel index " + std::to_string(i) + " outside [2, 8]");
    }
    ChannelPair p;
    p.index = i;
    p.signal = {spec.center_frequency_hz + comb_offset_hz(spec, i), width_hz, 0.0};
    p.idler = {spec.center_frequency_hz + comb_offset_hz(spec, -i), width_hz, 0.0};
    if (auto it = labels.find(i); it != labels.end()) {
      p.signal.nominal_wavelength_nm = it->second.first;
      p.idler.nominal_wavelength_nm = it->second.second;
    }
    plan.pairs.push_back(p);
  }
  std::sort(plan.pairs.begin(), plan.pairs.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  plan.validate();
  return plan;
}

std::pair<Channel, Channel> channel_pair(const ChannelPlan& plan, int index) {
  if (index < ChannelPlan::kMinIndex || index > ChannelPlan::kMaxIndex) {
    throw Error(ErrorCode::out_of_range, "channel index " + std::to_string(index) + " outside [2, 8]");
  }
  for (const auto& p : plan.pairs) {
    if (p.index != index) continue;
    const double mismatch = p.signal.center_hz + p.idler.center_hz - 2.0 * plan.pump.center_hz;
    if (std::fabs(mismatch) > plan.tolerance_hz) {
      throw Error(ErrorCode::invalid_argument, "channel pair " + std::to_string(index) + " violates energy conservation");
    }
    return {p.signal, p.idler};
  }
  throw Error(ErrorCode::out_of_range, "channel index " + std::to_string(index) + " not in plan");
}

namespace {

std::istream& operator>>(std::istream& in, TransmissionPoint& p) { return in >> p.frequency_hz >> p.transmission; }
std::istream& operator>>(std::istream& in, ModeFrequency& m) { return in >> m.mu >> m.frequency_hz; }

// Reads rows of two numeric columns after checking the header.
template <class Row>
std::vector<Row> read_two_columns(std::istream& in, const std::string& header) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io, "empty CSV, expected header '" + header + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw Error(ErrorCode::io, "unexpected CSV header '" + line + "', expected '" + header + "'");
  std::vector<Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Row r;
    if (!(ss >> r)) throw Error(ErrorCode::io, "malformed CSV line " + std::to_string(lineno));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

std::vector<TransmissionPoint> read_trace_csv(std::istream& in) {
  return read_two_columns<TransmissionPoint>(in, "frequency_hz,transmission");
}

std::vector<TransmissionPoint> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_trace_csv(in);
}

std::vector<ModeFrequency> read_resonances_csv(std::istream& in) {
  return read_two_columns<ModeFrequency>(in, "mu,frequency_hz");
}

std::vector<ModeFrequency> read_resonances_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return read_resonances_csv(in);
}

}  // namespace qlight
