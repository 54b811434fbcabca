#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qlight {

/// Parameter vector with per-parameter 1-sigma uncertainties, shared by every
/// fitting operation.
struct FitResult {
  std::vector<std::string> names;
  std::vector<double> parameters;
  std::vector<double> sigmas;
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;

  double value(std::string_view name) const;
  double sigma(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
};

/// Damped least squares (Levenberg-Marquardt with Marquardt diagonal scaling).
struct LmOptions {
  int max_iterations = 200;
  double relative_step_tolerance = 1e-9;
  double initial_damping = 1e-3;
  /// Scale the covariance by chi^2/dof. Use when residuals are not
  /// normalized by known per-point sigmas.
  bool scale_covariance = true;
};

struct LmProblem {
  int residual_count = 0;
  /// Weighted residuals r_i(p); the solver minimizes sum r_i^2.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals;
  /// Optional analytic Jacobian dr/dp (residual_count x n). Forward
  /// differences are used when empty.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
  /// Optional domain check; steps leaving the domain are rejected.
  std::function<bool(const Eigen::VectorXd&)> admissible;
};

struct LmSolution {
  Eigen::VectorXd parameters;
  Eigen::MatrixXd covariance;  // already scaled per LmOptions
  double cost = 0.0;           // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Throws Error(non_convergence) when the iteration cap is hit or the
/// damping diverges away from a stationary point.
LmSolution levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd start,
                               const LmOptions& options = {});

/// Weighted linear least squares: minimizes sum w_i (y_i - X_i b)^2.
/// Throws Error(rank_deficient) for singular designs.
struct LinearFit {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;  // (X^T W X)^{-1}, unscaled
  double chi2 = 0.0;
};

LinearFit weighted_linear_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& weights);

}  // namespace qlight
