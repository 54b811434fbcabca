#include "qlight/fit.hpp"

#include "qlight/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qlight {

std::size_t FitResult::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw Error(ErrorCode::invalid_argument, "fit result has no parameter '" + std::string(name) + "'");
}

double FitResult::value(std::string_view name) const { return parameters[index_of(name)]; }
double FitResult::sigma(std::string_view name) const { return sigmas[index_of(name)]; }

namespace {

Eigen::MatrixXd forward_jacobian(const LmProblem& problem, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& r0) {
  const Eigen::Index n = p.size();
  Eigen::MatrixXd jac(r0.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd q = p;
    const double h = 1e-7 * std::max(std::fabs(p[j]), 1e-8);
    q[j] += h;
    jac.col(j) = (problem.residuals(q) - r0) / (q[j] - p[j]);
  }
  return jac;
}

// Symmetric pseudo-inverse after Jacobi scaling, so parameters of very
// different magnitude (Hz next to dimensionless depths) are not truncated.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& raw) {
  Eigen::VectorXd d = raw.diagonal().cwiseAbs();
  for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = d[i] > 0.0 ? 1.0 / std::sqrt(d[i]) : 1.0;
  const Eigen::MatrixXd a = d.asDiagonal() * raw * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  const double cutoff = ev.cwiseAbs().maxCoeff() * 1e-14;
  Eigen::VectorXd inv = ev;
  for (Eigen::Index i = 0; i < ev.size(); ++i) inv[i] = std::fabs(ev[i]) > cutoff ? 1.0 / ev[i] : 0.0;
  return d.asDiagonal() * (eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose()) * d.asDiagonal();
}

}  // namespace

LmSolution levenberg_marquardt(const LmProblem& problem, Eigen::VectorXd p, const LmOptions& options) {
  const Eigen::Index n = p.size();
  auto jacobian_at = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& r) {
    return problem.jacobian ? problem.jacobian(x) : forward_jacobian(problem, x, r);
  };

  Eigen::VectorXd r = problem.residuals(p);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) throw Error(ErrorCode::non_convergence, "initial residuals are not finite");

  double lambda = options.initial_damping;
  Eigen::MatrixXd jac = jacobian_at(p, r);
  bool converged = false;
  int iter = 0;

  while (iter < options.max_iterations) {
    ++iter;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    if (cost == 0.0 || grad.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }
    Eigen::VectorXd diag = jtj.diagonal();
    for (Eigen::Index j = 0; j < n; ++j) diag[j] = std::max(diag[j], 1e-300);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      const Eigen::VectorXd trial = p + step;
      const bool ok = step.allFinite() && (!problem.admissible || problem.admissible(trial));
      double trial_cost = std::numeric_limits<double>::infinity();
      Eigen::VectorXd trial_r;
      if (ok) {
        trial_r = problem.residuals(trial);
        trial_cost = trial_r.squaredNorm();
      }
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        // MINPACK-style scaled step test: |D step| <= tol |D p|, D = sqrt(diag J^T J).
        const Eigen::VectorXd scale = diag.cwiseSqrt();
        const bool small = scale.cwiseProduct(step).norm() <=
                           options.relative_step_tolerance * scale.cwiseProduct(trial).norm();
        p = trial;
        r = std::move(trial_r);
        const double previous = cost;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        accepted = true;
        if (small || previous == cost) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e20) {
          // The damped step has shrunk to nothing without lowering the cost:
          // p is stationary to working precision.
          converged = true;
          break;
        }
      }
    }
    if (converged) break;
    jac = jacobian_at(p, r);
  }
  if (!converged) {
    throw Error(ErrorCode::non_convergence,
                "least-squares fit did not converge within " + std::to_string(options.max_iterations) + " iterations");
  }

  jac = jacobian_at(p, r);
  LmSolution sol;
  sol.covariance = pseudo_inverse(jac.transpose() * jac);
  const Eigen::Index dof = problem.residual_count - n;
  if (options.scale_covariance && dof > 0) sol.covariance *= cost / static_cast<double>(dof);
  sol.parameters = std::move(p);
  sol.cost = cost;
  sol.iterations = iter;
  sol.converged = true;
  return sol;
}

LinearFit weighted_linear_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& weights) {
  const Eigen::VectorXd sw = weights.cwiseSqrt();
  const Eigen::MatrixXd xw = sw.asDiagonal() * design;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-12);
  if (qr.rank() < design.cols()) {
    throw Error(ErrorCode::rank_deficient, "design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                                               " < " + std::to_string(design.cols()) + ")");
  }
  LinearFit fit;
  fit.coefficients = qr.solve(yw);
  fit.covariance = (xw.transpose() * xw).inverse();
  fit.chi2 = (yw - xw * fit.coefficients).squaredNorm();
  return fit;
}

}  // namespace qlight
