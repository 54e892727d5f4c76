#ifndef NVMAG_SPINMODEL_HPP
#define NVMAG_SPINMODEL_HPP

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nvmag/crystal.hpp"

namespace nvmag {

/// Ground-state spin-1 model parameters. Frequencies in MHz, fields in mT.
struct SpinModelParams {
  double d_zfs_MHz = 2870.0;
  double gamma_MHz_per_mT = 28.024;

  void validate() const;
};

/// Field seen by one NV axis. beta is the axis-field angle, omega the
/// field magnitude; b_parallel = omega cos(beta), b_perp = omega sin(beta).
struct AxisProjection {
  double b_parallel = 0.0;
  double b_perp = 0.0;
  double beta_deg = 0.0;
  double omega = 0.0;

  static AxisProjection from_components(double b_parallel, double b_perp);
  static AxisProjection from_field(const Vec3& axis, const Vec3& b);
};

/// 3x3 Hamiltonian in MHz, basis ordered |+1>, |0>, |-1>.
using Hamiltonian = Eigen::Matrix3cd;

/// H = D Sz^2 + gamma (b_par Sz + b_perp Sx). The transverse component is
/// put on the local x-axis; without strain the spectrum does not depend on
/// its azimuth.
Hamiltonian hamiltonian_matrix(const SpinModelParams& p, const AxisProjection& proj);

enum class SpinState { Zero = 0, Minus = 1, Plus = 2 };

struct EigenLevels {
  /// Energies indexed by SpinState.
  std::array<double, 3> energy{};
  /// Column i is the eigenvector labeled SpinState(i), in the |+1>,|0>,|-1> basis.
  Eigen::Matrix3cd vectors = Eigen::Matrix3cd::Zero();

  double operator[](SpinState s) const { return energy[static_cast<int>(s)]; }
  auto state(SpinState s) const { return vectors.col(static_cast<int>(s)); }
};

/// Diagonalizes a Hermitian Hamiltonian and labels the eigenstates by the
/// assignment to {|0>, |-1>, |+1>} with the largest total squared overlap.
/// Near-ties go to the assignment that follows energy order (0-like lowest).
/// Throws nvmag::Error when h deviates from Hermitian by more than 1e-9.
EigenLevels eigenlevels(const Hamiltonian& h);

enum class TransitionKind { Minus = 0, Plus = 1, DQ = 2 };

std::string_view to_string(TransitionKind k);
TransitionKind transition_kind_from_string(std::string_view s);

struct TransitionStrengths {
  double s_minus = 0.0;
  double s_plus = 0.0;
  double s_dq = 0.0;
};

/// Squared Sx matrix elements between labeled eigenstates, scaled by 2 so
/// that a single-quantum line at zero transverse field has strength 1.
TransitionStrengths transition_strength(const SpinModelParams& p, const AxisProjection& proj);

struct AxisTransitions {
  // Signed energy differences: f_minus = E(-1) - E(0), f_plus = E(+1) - E(0),
  // f_dq = E(+1) - E(-1). f_minus turns negative past the level anti-crossing.
  double f_minus = 0.0;
  double f_plus = 0.0;
  double f_dq = 0.0;
  TransitionStrengths strength;
  AxisProjection projection;

  double frequency(TransitionKind k) const;
  double strength_of(TransitionKind k) const;
};

struct TransitionTable {
  std::array<AxisTransitions, 4> axes;

  /// axis is the 1-based NV label.
  const AxisTransitions& axis(int label) const { return axes.at(static_cast<std::size_t>(label - 1)); }
};

/// Derivatives of the signed transition frequencies with respect to the
/// Cartesian field components (MHz/mT), from Hellmann-Feynman expectation
/// values. Invalid where levels are degenerate (b = 0).
struct TransitionGradients {
  // [axis index 0..3][kind]
  std::array<std::array<Vec3, 3>, 4> d_freq_d_b;

  const Vec3& of(int axis_label, TransitionKind k) const {
    return d_freq_d_b.at(static_cast<std::size_t>(axis_label - 1))[static_cast<std::size_t>(k)];
  }
};

/// Transition frequencies for all four NV axes at field b (mT, crystal frame).
/// Each axis is quantized along the field's projection, so b_parallel >= 0
/// and f_plus >= f_minus. Fills grad when given.
TransitionTable transition_frequencies(const SpinModelParams& p, const Vec3& b,
                                       TransitionGradients* grad = nullptr);

TransitionGradients transition_gradients(const SpinModelParams& p, const Vec3& b);

struct CurvePoint {
  double sweep_value = 0.0;
  int axis = 1;
  TransitionKind kind = TransitionKind::Minus;
  double freq_MHz = 0.0;
  double strength = 0.0;
};

/// Frequencies along a fixed direction for each magnitude in b_values (mT,
/// ascending, non-negative). Output is ordered by magnitude, then axis, then kind.
std::vector<CurvePoint> sweep_vs_field(const SpinModelParams& p, const Vec3& direction,
                                       std::span<const double> b_values);

enum class SweptAngle { Theta, Phi };

struct AngleSweep {
  double b_m = 0.0;            // mT
  SweptAngle swept = SweptAngle::Theta;
  double fixed_deg = 0.0;      // value of the other angle
  std::vector<double> values;  // swept angle, degrees
};

std::vector<CurvePoint> sweep_vs_angle(const SpinModelParams& p, const AngleSweep& sweep);

std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace nvmag

#endif  // NVMAG_SPINMODEL_HPP
