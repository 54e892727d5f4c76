#include "nvmag/lsq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nvmag::lsq {

namespace {

double relative_step(const Eigen::VectorXd& step, const Eigen::VectorXd& x, const Eigen::VectorXd& scale) {
  double rel = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    rel = std::max(rel, std::abs(step(i)) / (std::abs(x(i)) + scale(i)));
  return rel;
}

}  // namespace

Result levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& scale,
                           const Options& opt, const ProjectFn& project) {
  Result res;
  if (project) project(x0);
  res.x = std::move(x0);
  const Eigen::Index n = res.x.size();

  fn(res.x, res.residuals, &res.jacobian);
  ++res.evaluations;
  res.chi2 = res.residuals.squaredNorm();
  if (!std::isfinite(res.chi2)) {
    res.message = "non-finite residual at start point";
    return res;
  }

  double lambda = opt.initial_lambda;
  Eigen::VectorXd r_trial;
  Eigen::MatrixXd J_trial;

  while (res.iterations < opt.max_iterations) {
    ++res.iterations;
    const Eigen::MatrixXd A = res.jacobian.transpose() * res.jacobian;
    const Eigen::VectorXd g = res.jacobian.transpose() * res.residuals;
    Eigen::VectorXd diag = A.diagonal();
    const double dmax = std::max(diag.maxCoeff(), std::numeric_limits<double>::min());
    for (Eigen::Index i = 0; i < n; ++i) diag(i) = std::max(diag(i), 1e-15 * dmax);

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd M = A;
      M.diagonal() += lambda * diag;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      Eigen::VectorXd delta = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= 10.0;
        if (lambda > opt.max_lambda) {
          res.message = "singular normal equations";
          return res;
        }
        continue;
      }

      Eigen::VectorXd x_trial = res.x + delta;
      if (project) project(x_trial);
      const Eigen::VectorXd step = x_trial - res.x;
      const double rel = relative_step(step, res.x, scale);

      fn(x_trial, r_trial, &J_trial);
      ++res.evaluations;
      const double chi2_trial = r_trial.squaredNorm();

      if (std::isfinite(chi2_trial) && chi2_trial <= res.chi2) {
        const double predicted = res.chi2 - (res.residuals + res.jacobian * step).squaredNorm();
        const double actual = res.chi2 - chi2_trial;
        const double ref = std::max(res.chi2, std::numeric_limits<double>::min());
        res.x = std::move(x_trial);
        res.residuals = r_trial;
        res.jacobian = J_trial;
        res.chi2 = chi2_trial;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < opt.param_tol) {
          res.converged = true;
          res.message = "parameter step below tolerance";
          return res;
        }
        if (actual <= opt.chi2_tol * ref && std::abs(predicted) <= opt.chi2_tol * ref) {
          res.converged = true;
          res.message = "chi-square step below tolerance";
          return res;
        }
      } else {
        if (rel < opt.param_tol) {
          // No step of useful size reduces chi-square: at the minimum (or
          // pinned against a bound) within tolerance.
          res.converged = true;
          res.message = "parameter step below tolerance";
          return res;
        }
        lambda *= 10.0;
        if (lambda > opt.max_lambda) {
          res.message = "damping limit reached without progress";
          return res;
        }
      }
    }
  }
  res.message = "iteration limit reached";
  return res;
}

bool covariance(const Eigen::MatrixXd& J, Eigen::MatrixXd& cov) {
  const Eigen::Index n = J.cols();
  cov.setConstant(n, n, std::numeric_limits<double>::infinity());
  if (J.rows() < n) return false;
  // Column scaling keeps the rank test independent of parameter units.
  Eigen::VectorXd s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double c = J.col(i).norm();
    if (!(c > 0.0) || !std::isfinite(c)) return false;
    s(i) = 1.0 / c;
  }
  const Eigen::MatrixXd Js = J * s.asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Js);
  qr.setThreshold(1e-12);
  if (qr.rank() < n) return false;
  const Eigen::MatrixXd As = Js.transpose() * Js;
  const Eigen::MatrixXd inv = As.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
  if (!inv.allFinite()) return false;
  cov = s.asDiagonal() * inv * s.asDiagonal();
  return true;
}

}  // namespace nvmag::lsq
