#ifndef NVMAG_NOISE_HPP
#define NVMAG_NOISE_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace nvmag {

struct TimeSeries {
  double sample_rate_Hz = 1.0;
  std::vector<double> samples;
  std::string unit = "V";

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_Hz; }
  void validate() const;
};

enum class AsdWindow { Rectangular, Hann };

// How per-segment spectra are combined. Power averages |X|^2 and takes the
// root at the end (unbiased for stationary noise); Amplitude averages the
// per-segment ASDs directly.
enum class AsdAveraging { Power, Amplitude };

struct AsdOptions {
  AsdWindow window = AsdWindow::Rectangular;
  bool half_overlap = false;  // 50 % overlap, normally paired with Hann
  AsdAveraging averaging = AsdAveraging::Power;
  bool remove_mean = false;
};

struct ASDResult {
  std::vector<double> freqs_Hz;  // 0 .. Nyquist
  std::vector<double> density;   // unit / sqrt(Hz), one-sided
  std::size_t segment_count = 0;
  double segment_duration_s = 0.0;
  std::string unit;
  std::string method;  // window / overlap / averaging, for output metadata

  double resolution_Hz() const { return segment_duration_s > 0.0 ? 1.0 / segment_duration_s : 0.0; }
};

ASDResult asd_averaged(const TimeSeries& ts, double segment_duration_s, const AsdOptions& opt = {});

// One-sided ASD of a single block (rectangular window), the building block
// of asd_averaged. Exposed for per-segment checks.
ASDResult asd_single(const std::vector<double>& block, double sample_rate_Hz);

// Mean density over bins with f_lo <= f <= f_hi.
double band_sensitivity(const ASDResult& asd, double f_lo_Hz, double f_hi_Hz);

struct SlopeCalibration {
  double slope_V_per_Hz = 1.0;  // lock-in output per Hz of detuning, signed
  double gamma_MHz_per_mT = 28.024;

  void validate() const;
};

// B(t) = V(t) / (slope * gamma), in tesla.
TimeSeries volts_to_field(const TimeSeries& ts_volts, const SlopeCalibration& cal);

struct ToneFit {
  double amplitude = 0.0;
  double phase_rad = 0.0;  // signal = amplitude * cos(2 pi f0 t - phase) + offset
  double offset = 0.0;
  double sigma_amplitude = 0.0;
  double residual_rms = 0.0;
};

// Least-squares fit of a cos + b sin + c at a known frequency. Throws
// nvmag::Error at or above Nyquist.
ToneFit extract_tone(const TimeSeries& ts, double f0_Hz);

struct ShotNoiseEstimate {
  double sensitivity_T_per_rtHz = 0.0;
  double photocurrent_A = 0.0;
  double geometry_factor = 0.0;
  std::string formula;
};

// Photon-shot-noise limited sensitivity of a cw-ODMR magnetometer:
//   dB = k * fwhm / (gamma * contrast) * sqrt(2 e / I),  I = P * responsivity
// with k = 4 / (3 sqrt 3) for the steepest slope of a Lorentzian dip.
// Zero contrast yields +inf.
ShotNoiseEstimate shot_noise_limit(double pl_power_W, double contrast, double fwhm_MHz, double responsivity_A_per_W,
                                   double gamma_MHz_per_mT = 28.024);

}  // namespace nvmag

#endif  // NVMAG_NOISE_HPP
