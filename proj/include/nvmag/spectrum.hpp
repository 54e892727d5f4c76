#ifndef NVMAG_SPECTRUM_HPP
#define NVMAG_SPECTRUM_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nvmag {

// A single dispersive resonance as seen after frequency-modulated lock-in
// detection: the first derivative of a Lorentzian.
struct Lineshape {
  double center_MHz = 0.0;
  double fwhm_MHz = 1.0;
  double amplitude = 0.0;
};

// amplitude * (-2u / (1 + u^2)^2), u = (f - center) / (fwhm / 2).
// Positive amplitude gives a positive lobe below the center. The extrema sit
// at u = -+1/sqrt(3) with height amplitude * 3 sqrt(3) / 8.
double dlorentzian(double f_MHz, const Lineshape& line);

// Height of the extremum relative to the amplitude prefactor.
inline constexpr double kDLorentzianPeak = 0.649519052838329;  // 3 sqrt(3) / 8

struct Resonance {
  double center_MHz = 0.0;
  double amplitude = 0.0;
};

// Sum of derivative Lorentzians sharing one linewidth, plus a constant offset.
struct SpectrumModel {
  std::vector<Resonance> lines;
  double fwhm_MHz = 1.0;
  double baseline = 0.0;

  static constexpr int kMaxComponents = 8;

  int components() const { return static_cast<int>(lines.size()); }
  double evaluate(double f_MHz) const;
  Lineshape line(int i) const;
  void validate() const;
};

struct SweepTrace {
  std::vector<double> freqs_MHz;
  std::vector<double> values;
  std::optional<double> y_mm;
  std::optional<double> z_mm;

  // Equal lengths, finite values, strictly monotone frequencies (either
  // direction). Throws nvmag::Error.
  void validate() const;
};

// Model evaluated at freqs plus seeded Gaussian noise.
SweepTrace synthesize(const SpectrumModel& model, std::span<const double> freqs, double noise_sigma,
                      std::uint64_t seed);

// Frequency grid of n_points samples at `step` spacing placed in windows
// around each center; windows grow symmetrically until the union holds
// n_points, then the points farthest from any center are dropped.
std::vector<double> resonance_windows(std::span<const double> centers, std::size_t n_points = 164,
                                      double step = 1.0);

// Robust per-point noise estimate: scaled MAD of second differences of
// neighbouring samples (gaps in the frequency grid are skipped).
double robust_noise(const SweepTrace& trace);

// Finds `components` dispersive features as opposite-sign lobe pairs above
// 5x the robust noise. Throws nvmag::Error("... found k of n ...") when fewer
// are present.
SpectrumModel initial_guess(const SweepTrace& trace, int components = 4);

struct FitOptions {
  int max_iterations = 200;
  double param_tol = 1e-8;
  double chi2_tol = 1e-12;
};

struct SpectrumFit {
  SpectrumModel model;
  std::vector<double> sigma_center;
  std::vector<double> sigma_amplitude;
  double sigma_fwhm = 0.0;
  double sigma_baseline = 0.0;
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string message;
  std::vector<std::string> warnings;
};

// Unweighted damped least squares over all centers, amplitudes, the shared
// linewidth and the baseline. Uncertainties are sqrt(diag((J^T J)^-1) * s^2)
// with s^2 the residual variance. The trace may be in either scan direction.
SpectrumFit fit_spectrum(const SweepTrace& trace, const SpectrumModel& guess, const FitOptions& opt = {});

// Parameter vector layout used by the fitter:
// [centers..., amplitudes..., fwhm, baseline].
Eigen::VectorXd pack_parameters(const SpectrumModel& m);
SpectrumModel unpack_parameters(const Eigen::VectorXd& p, int components);

// Analytic d(model)/d(parameters) at each frequency.
Eigen::MatrixXd model_jacobian(std::span<const double> freqs, const SpectrumModel& m);

}  // namespace nvmag

#endif  // NVMAG_SPECTRUM_HPP
