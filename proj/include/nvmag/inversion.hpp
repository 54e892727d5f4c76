#ifndef NVMAG_INVERSION_HPP
#define NVMAG_INVERSION_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nvmag/crystal.hpp"
#include "nvmag/spinmodel.hpp"

namespace nvmag {

struct TransitionRef {
  int axis = 1;  // 1..4
  TransitionKind kind = TransitionKind::Minus;

  bool operator==(const TransitionRef&) const = default;
};

// Which model transition each measured line belongs to, in the order of the
// measured frequencies.
struct TransitionAssignment {
  std::vector<TransitionRef> lines;

  void validate() const;
  std::string to_string() const;  // "1:dq,4:dq,3:minus,2:minus"
  static TransitionAssignment parse(std::string_view text);
  // The four in-band lines of the Halbach-magnet configuration, ascending.
  static TransitionAssignment halbach_default();
};

struct InversionConfig {
  double nominal_b_mT = 104.5;
  double magnitude_band = 0.10;  // B is confined to nominal * (1 +- band)
  double theta0_deg = 35.46;
  double phi0_deg = -2.43;
  int multistart = 8;
  double seed_spread_deg = 5.0;  // starts drawn within +- spread around the seed angles
  std::uint64_t rng_seed = 1;
  double param_tol = 1e-9;
  int max_iterations = 200;
  // Reference line uncertainty for the mismatch test when none is measured.
  double assumed_sigma_MHz = 0.1;
  // Maps lab-frame fields (the reported angles) into the crystal frame.
  Eigen::Matrix3d lab_to_crystal = Eigen::Matrix3d::Identity();

  double b_min() const { return nominal_b_mT * (1.0 - magnitude_band); }
  double b_max() const { return nominal_b_mT * (1.0 + magnitude_band); }
  void validate() const;
};

struct Prediction {
  std::vector<double> freqs_MHz;  // observed line positions, |signed frequency|
  std::vector<double> strengths;
  bool unobservable = false;  // some assigned line has (near) zero drive strength
};

Prediction predict_frequencies(const SpinModelParams& p, const SphericalField& field,
                               const TransitionAssignment& assign,
                               const Eigen::Matrix3d& lab_to_crystal = Eigen::Matrix3d::Identity());

struct Measurement {
  std::vector<double> freqs_MHz;
  std::vector<double> sigma_MHz;  // empty: uniform weights

  void validate(std::size_t expected) const;
};

struct StartDiagnostics {
  SphericalField start;
  SphericalField end;
  double chi2 = 0.0;
  double residual_rms_MHz = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

struct InversionResult {
  SphericalField field;
  double sigma_b = 0.0;
  double sigma_theta = 0.0;
  double sigma_phi = 0.0;
  double residual_rms_MHz = 0.0;
  bool converged = false;
  bool unique = false;
  bool model_mismatch = false;
  bool at_bound = false;
  bool unobservable_line = false;
  std::vector<StartDiagnostics> starts;
  std::vector<std::string> warnings;
};

// Bounded damped least squares over (B, theta, phi) from several starts.
// Throws nvmag::Error when no start converges.
InversionResult invert(const Measurement& measured, const SpinModelParams& p, const InversionConfig& cfg,
                       const TransitionAssignment& assign);

struct LocalMinimum {
  SphericalField field;
  double sigma_b = 0.0;
  double sigma_theta = 0.0;
  double sigma_phi = 0.0;
  double chi2 = 0.0;
  double residual_rms_MHz = 0.0;
  int members = 0;
  // Residual within the mismatch threshold, i.e. an acceptable reconstruction.
  bool consistent = false;
};

struct UniquenessReport {
  std::vector<LocalMinimum> minima;  // best first
  bool unique = false;
  bool degenerate = false;  // zero-magnitude solution, angles undefined
  int unconverged_starts = 0;
};

// Clusters converged multistart solutions; two solutions merge when each
// parameter differs by less than max(3 sigma, resolution floor). All clusters
// are listed, but only those that fit the data within the mismatch threshold
// count against uniqueness (unless none do).
UniquenessReport uniqueness_scan(const Measurement& measured, const SpinModelParams& p,
                                 const InversionConfig& cfg, const TransitionAssignment& assign);

// Matches each measured line (ascending) to the nearest unused observable
// model transition at the seed field.
TransitionAssignment nearest_assignment(std::vector<double> measured_MHz, const SpinModelParams& p,
                                        const InversionConfig& cfg);

// Merge-radius floors: below these the solutions are the same point.
inline constexpr double kMergeFloorB_mT = 1e-3;
inline constexpr double kMergeFloorDeg = 1e-3;

// Residual RMS above this multiple of the line sigma flags a model mismatch.
inline constexpr double kMismatchFactor = 5.0;

}  // namespace nvmag

#endif  // NVMAG_INVERSION_HPP
