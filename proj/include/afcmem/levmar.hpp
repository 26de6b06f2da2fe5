#ifndef AFCMEM_LEVMAR_HPP
#define AFCMEM_LEVMAR_HPP

#include <Eigen/Dense>
#include <functional>
#include <limits>

#include "afcmem/common.hpp"

namespace afcmem {

/// Residual callback: maps a parameter vector to the vector of (weighted)
/// residuals model(p) - data. The fitter minimizes its squared norm.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LmOptions {
  int max_iterations = 500;
  double step_tol = 1e-14;     // relative parameter step below which we stop
  double cost_tol = 1e-14;     // relative cost decrease below which we stop
  double initial_lambda = 1e-3;
  /// When true, covariance is scaled by the reduced chi-square (use for
  /// unweighted fits); when false the residuals are assumed already
  /// normalized by per-point sigma.
  bool scale_covariance_by_residual = true;
};

struct LmResult {
  Eigen::VectorXd parameters;
  Eigen::MatrixXd covariance;  // of the linearized problem at the optimum
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;
};

namespace detail {

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& f, const Eigen::VectorXd& p,
                                        const Eigen::VectorXd& r0) {
  const auto n = p.size();
  Eigen::MatrixXd jac(r0.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(p[j]));
    Eigen::VectorXd pj = p;
    pj[j] += h;
    jac.col(j) = (f(pj) - r0) / h;
  }
  return jac;
}

}  // namespace detail

/// Levenberg-Marquardt trust-region iteration with numeric Jacobian.
inline LmResult lm_fit(const ResidualFn& residuals, const Eigen::VectorXd& initial,
                       const LmOptions& opt = {}) {
  LmResult out;
  Eigen::VectorXd p = initial;
  Eigen::VectorXd r = residuals(p);
  double cost = r.squaredNorm();
  double lambda = opt.initial_lambda;
  const Eigen::Index m = r.size();
  const Eigen::Index n = p.size();

  Eigen::MatrixXd jac;
  int iter = 0;
  bool converged = false;
  for (; iter < opt.max_iterations; ++iter) {
    jac = detail::numeric_jacobian(residuals, p, r);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd jtr = jac.transpose() * r;

    bool accepted = false;
    for (int attempt = 0; attempt < 32; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      for (Eigen::Index k = 0; k < n; ++k)
        damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
      Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) break;
      Eigen::VectorXd candidate = p + step;
      Eigen::VectorXd rc = residuals(candidate);
      if (!rc.allFinite()) {
        lambda *= 8.0;
        continue;
      }
      const double new_cost = rc.squaredNorm();
      if (new_cost < cost) {
        const double rel_step = step.norm() / std::max(p.norm(), 1e-300);
        const double rel_drop = (cost - new_cost) / std::max(cost, 1e-300);
        p = candidate;
        r = rc;
        cost = new_cost;
        lambda = std::max(lambda / 4.0, 1e-14);
        accepted = true;
        if (rel_step < opt.step_tol || rel_drop < opt.cost_tol) converged = true;
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e14) break;
    }
    if (!accepted) {
      // No downhill step found: already at (numerical) optimum.
      converged = true;
    }
    if (converged) break;
  }

  out.parameters = p;
  out.iterations = iter + 1;
  out.converged = converged;
  out.residual_rms = m > 0 ? std::sqrt(cost / static_cast<double>(m)) : 0.0;

  jac = detail::numeric_jacobian(residuals, p, r);
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
  if (opt.scale_covariance_by_residual && m > n)
    cov *= cost / static_cast<double>(m - n);
  out.covariance = cov;
  return out;
}

}  // namespace afcmem

#endif  // AFCMEM_LEVMAR_HPP
