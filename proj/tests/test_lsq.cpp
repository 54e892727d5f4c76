#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "nvmag/lsq.hpp"

using namespace nvmag;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("Rosenbrock as a least-squares problem reaches (1, 1)") {
  const lsq::ResidualFn fn = [](const VectorXd& x, VectorXd& r, MatrixXd* J) {
    r.resize(2);
    r << 10.0 * (x(1) - x(0) * x(0)), 1.0 - x(0);
    if (J) {
      J->resize(2, 2);
      *J << -20.0 * x(0), 10.0, -1.0, 0.0;
    }
  };
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const lsq::Result res = lsq::levenberg_marquardt(fn, x0, VectorXd::Ones(2));
  CHECK(res.converged);
  CHECK(res.x(0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res.x(1) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(res.chi2 < 1e-20);
}

TEST_CASE("exponential decay fit recovers generating parameters") {
  const double a = 3.0, k = 0.7, c = 0.2;
  VectorXd t = VectorXd::LinSpaced(40, 0.0, 8.0);
  VectorXd y(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) y(i) = a * std::exp(-k * t(i)) + c;
  const lsq::ResidualFn fn = [&](const VectorXd& x, VectorXd& r, MatrixXd* J) {
    r.resize(t.size());
    if (J) J->resize(t.size(), 3);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double e = std::exp(-x(1) * t(i));
      r(i) = x(0) * e + x(2) - y(i);
      if (J) {
        (*J)(i, 0) = e;
        (*J)(i, 1) = -x(0) * t(i) * e;
        (*J)(i, 2) = 1.0;
      }
    }
  };
  VectorXd x0(3);
  x0 << 1.0, 2.0, 0.0;
  const lsq::Result res = lsq::levenberg_marquardt(fn, x0, VectorXd::Ones(3));
  REQUIRE(res.converged);
  CHECK(res.x(0) == doctest::Approx(a).epsilon(1e-9));
  CHECK(res.x(1) == doctest::Approx(k).epsilon(1e-9));
  CHECK(res.x(2) == doctest::Approx(c).epsilon(1e-9));
  CHECK(res.jacobian.rows() == t.size());
  CHECK(res.residuals.norm() < 1e-8);
}

TEST_CASE("projection keeps iterates inside a box") {
  // Unconstrained minimum at x = 5; the box stops it at 2.
  const lsq::ResidualFn fn = [](const VectorXd& x, VectorXd& r, MatrixXd* J) {
    r.resize(1);
    r(0) = x(0) - 5.0;
    if (J) *J = MatrixXd::Ones(1, 1);
  };
  const lsq::ProjectFn box = [](VectorXd& x) { x(0) = std::clamp(x(0), -2.0, 2.0); };
  const lsq::Result res = lsq::levenberg_marquardt(fn, VectorXd::Zero(1), VectorXd::Ones(1), {}, box);
  CHECK(res.x(0) == doctest::Approx(2.0));
}

TEST_CASE("iteration cap is reported as non-convergence") {
  const lsq::ResidualFn fn = [](const VectorXd& x, VectorXd& r, MatrixXd* J) {
    r.resize(2);
    r << 10.0 * (x(1) - x(0) * x(0)), 1.0 - x(0);
    if (J) {
      J->resize(2, 2);
      *J << -20.0 * x(0), 10.0, -1.0, 0.0;
    }
  };
  lsq::Options opt;
  opt.max_iterations = 2;
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const lsq::Result res = lsq::levenberg_marquardt(fn, x0, VectorXd::Ones(2), opt);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations <= 2);
  CHECK_FALSE(res.message.empty());
}

TEST_CASE("covariance of a full-rank and a rank-deficient Jacobian") {
  MatrixXd J(3, 2);
  J << 1, 0, 0, 2, 1, 1;
  MatrixXd cov;
  REQUIRE(lsq::covariance(J, cov));
  const MatrixXd expect = (J.transpose() * J).inverse();
  CHECK((cov - expect).norm() < 1e-12);

  MatrixXd D(3, 2);
  D << 1, 2, 2, 4, 3, 6;
  CHECK_FALSE(lsq::covariance(D, cov));
  CHECK(cov(0, 0) == std::numeric_limits<double>::infinity());
}
