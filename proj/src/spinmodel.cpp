#include "nvmag/spinmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

// Row index of |m_s> in the |+1>, |0>, |-1> basis, per SpinState.
constexpr std::array<int, 3> kBasisRow = {1, 2, 0};

const Eigen::Matrix3d& spin_z() {
  static const Eigen::Matrix3d sz = Eigen::Vector3d(1.0, 0.0, -1.0).asDiagonal();
  return sz;
}

const Eigen::Matrix3d& spin_x() {
  static const Eigen::Matrix3d sx = [] {
    Eigen::Matrix3d m;
    m << 0, 1, 0, 1, 0, 1, 0, 1, 0;
    return Eigen::Matrix3d(m / std::sqrt(2.0));
  }();
  return sx;
}

double expectation(const Eigen::Matrix3d& op, const Eigen::Vector3cd& v) {
  return (v.adjoint() * op.cast<std::complex<double>>() * v)(0).real();
}

double sx_element_sq(const Eigen::Vector3cd& a, const Eigen::Vector3cd& b) {
  return std::norm((a.adjoint() * spin_x().cast<std::complex<double>>() * b)(0));
}

// Axis projection with the quantization axis flipped onto the field side.
struct OrientedProjection {
  AxisProjection proj;
  double sign = 1.0;
  Vec3 perp_dir = Vec3::Zero();
};

OrientedProjection orient(const Vec3& axis, const Vec3& b) {
  OrientedProjection o;
  const AxisComponents c = project_field(axis, b);
  o.sign = c.b_parallel < 0.0 ? -1.0 : 1.0;
  o.proj = AxisProjection::from_components(std::abs(c.b_parallel), c.b_perp);
  if (c.b_perp > 0.0) o.perp_dir = (b - c.b_parallel * axis) / c.b_perp;
  return o;
}

}  // namespace

void SpinModelParams::validate() const {
  if (!(d_zfs_MHz > 0.0) || !std::isfinite(d_zfs_MHz))
    throw Error("spin model: zero-field splitting must be positive");
  if (!(gamma_MHz_per_mT > 0.0) || !std::isfinite(gamma_MHz_per_mT))
    throw Error("spin model: gyromagnetic ratio must be positive");
}

AxisProjection AxisProjection::from_components(double b_parallel, double b_perp) {
  AxisProjection p;
  p.b_parallel = b_parallel;
  p.b_perp = b_perp;
  p.omega = std::hypot(b_parallel, b_perp);
  p.beta_deg = p.omega > 0.0 ? rad2deg(std::atan2(b_perp, b_parallel)) : 0.0;
  return p;
}

AxisProjection AxisProjection::from_field(const Vec3& axis, const Vec3& b) {
  const AxisComponents c = project_field(axis, b);
  return from_components(c.b_parallel, c.b_perp);
}

Hamiltonian hamiltonian_matrix(const SpinModelParams& p, const AxisProjection& proj) {
  const Eigen::Matrix3d sz = spin_z();
  const Eigen::Matrix3d h = p.d_zfs_MHz * sz * sz +
                            p.gamma_MHz_per_mT * (proj.b_parallel * sz + proj.b_perp * spin_x());
  return h.cast<std::complex<double>>();
}

EigenLevels eigenlevels(const Hamiltonian& h) {
  const double asym = (h - h.adjoint()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-9))
    throw Error("eigenlevels: matrix is not Hermitian (deviation " + std::to_string(asym) + ")");

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(h);
  if (solver.info() != Eigen::Success) throw Error("eigenlevels: diagonalization failed");
  const Eigen::Vector3d& e = solver.eigenvalues();  // ascending
  const Eigen::Matrix3cd& v = solver.eigenvectors();

  // overlap(label, col): weight of eigenvector col on the basis state of label.
  Eigen::Matrix3d overlap;
  for (int label = 0; label < 3; ++label)
    for (int col = 0; col < 3; ++col) overlap(label, col) = std::norm(v(kBasisRow[label], col));

  // perm[label] = eigenvector column. The identity is tried first, so
  // near-ties keep the energy order Zero < Minus < Plus.
  std::array<int, 3> perm = {0, 1, 2};
  std::array<int, 3> best = perm;
  double best_score = -1.0;
  do {
    const double score = overlap(0, perm[0]) + overlap(1, perm[1]) + overlap(2, perm[2]);
    if (score > best_score + 1e-9) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  EigenLevels out;
  for (int label = 0; label < 3; ++label) {
    out.energy[label] = e(best[label]);
    out.vectors.col(label) = v.col(best[label]);
  }
  return out;
}

std::string_view to_string(TransitionKind k) {
  switch (k) {
    case TransitionKind::Minus: return "minus";
    case TransitionKind::Plus: return "plus";
    case TransitionKind::DQ: return "dq";
  }
  return "?";
}

TransitionKind transition_kind_from_string(std::string_view s) {
  if (s == "minus" || s == "-") return TransitionKind::Minus;
  if (s == "plus" || s == "+") return TransitionKind::Plus;
  if (s == "dq" || s == "DQ") return TransitionKind::DQ;
  throw Error("unknown transition kind '" + std::string(s) + "'");
}

TransitionStrengths transition_strength(const SpinModelParams& p, const AxisProjection& proj) {
  const EigenLevels lv = eigenlevels(hamiltonian_matrix(p, proj));
  const Eigen::Vector3cd zero = lv.state(SpinState::Zero);
  const Eigen::Vector3cd minus = lv.state(SpinState::Minus);
  const Eigen::Vector3cd plus = lv.state(SpinState::Plus);
  TransitionStrengths s;
  s.s_minus = 2.0 * sx_element_sq(zero, minus);
  s.s_plus = 2.0 * sx_element_sq(zero, plus);
  s.s_dq = 2.0 * sx_element_sq(minus, plus);
  return s;
}

double AxisTransitions::frequency(TransitionKind k) const {
  switch (k) {
    case TransitionKind::Minus: return f_minus;
    case TransitionKind::Plus: return f_plus;
    case TransitionKind::DQ: return f_dq;
  }
  return 0.0;
}

double AxisTransitions::strength_of(TransitionKind k) const {
  switch (k) {
    case TransitionKind::Minus: return strength.s_minus;
    case TransitionKind::Plus: return strength.s_plus;
    case TransitionKind::DQ: return strength.s_dq;
  }
  return 0.0;
}

TransitionTable transition_frequencies(const SpinModelParams& p, const Vec3& b, TransitionGradients* grad) {
  TransitionTable table;
  const NVAxisSet& axes = nv_axes();
  for (std::size_t k = 0; k < axes.size(); ++k) {
    const OrientedProjection o = orient(axes[k], b);
    const EigenLevels lv = eigenlevels(hamiltonian_matrix(p, o.proj));
    AxisTransitions& t = table.axes[k];
    t.projection = o.proj;
    t.f_minus = lv[SpinState::Minus] - lv[SpinState::Zero];
    t.f_plus = lv[SpinState::Plus] - lv[SpinState::Zero];
    t.f_dq = lv[SpinState::Plus] - lv[SpinState::Minus];
    const Eigen::Vector3cd zero = lv.state(SpinState::Zero);
    const Eigen::Vector3cd minus = lv.state(SpinState::Minus);
    const Eigen::Vector3cd plus = lv.state(SpinState::Plus);
    t.strength.s_minus = 2.0 * sx_element_sq(zero, minus);
    t.strength.s_plus = 2.0 * sx_element_sq(zero, plus);
    t.strength.s_dq = 2.0 * sx_element_sq(minus, plus);

    if (grad) {
      // dE/db = gamma (<Sz> a + <Sx> e_perp) in the oriented local frame.
      std::array<Vec3, 3> d_energy;
      for (int s = 0; s < 3; ++s) {
        const Eigen::Vector3cd v = lv.vectors.col(s);
        d_energy[s] = p.gamma_MHz_per_mT *
                      (expectation(spin_z(), v) * o.sign * axes[k] + expectation(spin_x(), v) * o.perp_dir);
      }
      const auto Z = static_cast<int>(SpinState::Zero);
      const auto M = static_cast<int>(SpinState::Minus);
      const auto P = static_cast<int>(SpinState::Plus);
      auto& row = grad->d_freq_d_b[k];
      row[static_cast<int>(TransitionKind::Minus)] = d_energy[M] - d_energy[Z];
      row[static_cast<int>(TransitionKind::Plus)] = d_energy[P] - d_energy[Z];
      row[static_cast<int>(TransitionKind::DQ)] = d_energy[P] - d_energy[M];
    }
  }
  return table;
}

TransitionGradients transition_gradients(const SpinModelParams& p, const Vec3& b) {
  TransitionGradients g;
  transition_frequencies(p, b, &g);
  return g;
}

namespace {

void append_table(std::vector<CurvePoint>& out, double sweep_value, const TransitionTable& t) {
  for (int axis = 1; axis <= 4; ++axis) {
    const AxisTransitions& a = t.axis(axis);
    for (TransitionKind k : {TransitionKind::Minus, TransitionKind::Plus, TransitionKind::DQ})
      out.push_back({sweep_value, axis, k, a.frequency(k), a.strength_of(k)});
  }
}

}  // namespace

std::vector<CurvePoint> sweep_vs_field(const SpinModelParams& p, const Vec3& direction,
                                       std::span<const double> b_values) {
  p.validate();
  std::vector<CurvePoint> out;
  if (b_values.empty()) return out;
  const double n = direction.norm();
  if (!(n > 0.0)) throw Error("sweep: direction must be non-zero");
  for (std::size_t i = 0; i < b_values.size(); ++i) {
    if (!(b_values[i] >= 0.0)) throw Error("sweep: field magnitudes must be non-negative");
    if (i > 0 && b_values[i] < b_values[i - 1]) throw Error("sweep: field magnitudes must be ascending");
  }
  const Vec3 u = direction / n;
  out.reserve(b_values.size() * 12);
  for (double b : b_values) append_table(out, b, transition_frequencies(p, b * u));
  return out;
}

std::vector<CurvePoint> sweep_vs_angle(const SpinModelParams& p, const AngleSweep& sweep) {
  p.validate();
  if (!(sweep.b_m >= 0.0)) throw Error("sweep: field magnitude must be non-negative");
  std::vector<CurvePoint> out;
  out.reserve(sweep.values.size() * 12);
  for (double a : sweep.values) {
    SphericalField s;
    s.b_m = sweep.b_m;
    s.theta_deg = sweep.swept == SweptAngle::Theta ? a : sweep.fixed_deg;
    s.phi_deg = sweep.swept == SweptAngle::Phi ? a : sweep.fixed_deg;
    append_table(out, a, transition_frequencies(p, spherical_to_cartesian(s)));
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  if (n == 1) v[0] = lo;
  for (std::size_t i = 0; n > 1 && i < n; ++i)
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

}  // namespace nvmag
