#ifndef NVMAG_LSQ_HPP
#define NVMAG_LSQ_HPP

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace nvmag::lsq {

// Residual callback. Fills r (size m) and, when J is non-null, the m x n
// Jacobian dr/dx.
using ResidualFn = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J)>;

// Maps a trial point back into the feasible set (box clamp, angle wrap, ...).
using ProjectFn = std::function<void(Eigen::VectorXd& x)>;

struct Options {
  int max_iterations = 200;
  // Converged when max_i |dx_i| / (|x_i| + scale_i) falls below this.
  double param_tol = 1e-8;
  // ... or when the relative chi-square decrease falls below this.
  double chi2_tol = 1e-12;
  double initial_lambda = 1e-3;
  double max_lambda = 1e16;
};

struct Result {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd jacobian;  // at x
  double chi2 = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

// Damped Gauss-Newton (Levenberg-Marquardt with Marquardt diagonal scaling).
// scale gives a per-parameter magnitude used in the relative step test so
// that parameters near zero do not stall convergence.
Result levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& scale,
                           const Options& opt = {}, const ProjectFn& project = {});

// Covariance (J^T J)^-1 via a rank-revealing decomposition. Returns false
// when J is rank deficient, leaving cov filled with +inf.
bool covariance(const Eigen::MatrixXd& J, Eigen::MatrixXd& cov);

}  // namespace nvmag::lsq

#endif  // NVMAG_LSQ_HPP
