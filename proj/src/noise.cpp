#include "nvmag/noise.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>

#include <Eigen/Dense>
#include <fftw3.h>

#include "nvmag/crystal.hpp"
#include "nvmag/error.hpp"

namespace nvmag {

void TimeSeries::validate() const {
  if (!(sample_rate_Hz > 0.0) || !std::isfinite(sample_rate_Hz))
    throw Error("time series: sample rate must be positive");
  if (samples.size() < 2) throw Error("time series: need at least two samples");
  for (double v : samples)
    if (!std::isfinite(v)) throw Error("time series: non-finite sample");
}

namespace {

// Owns an r2c plan for one transform length. FFTW planning is not
// thread-safe, so plans are created under a lock.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    static std::mutex planner;
    std::lock_guard lock(planner);
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  // |X_k|^2 for k = 0..n/2.
  std::vector<double> power(const double* x, const std::vector<double>& window) {
    for (std::size_t i = 0; i < n_; ++i) in_[i] = x[i] * (window.empty() ? 1.0 : window[i]);
    fftw_execute(plan_);
    std::vector<double> p(n_ / 2 + 1);
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    return p;
  }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// One-sided PSD from |X|^2: 2 |X|^2 / (fs * S2), DC and Nyquist unfolded,
// where S2 = sum(w^2).
void fold_one_sided(std::vector<double>& p, std::size_t n, double fs, double s2) {
  for (std::size_t k = 0; k < p.size(); ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    p[k] *= (edge ? 1.0 : 2.0) / (fs * s2);
  }
}

}  // namespace

ASDResult asd_single(const std::vector<double>& block, double sample_rate_Hz) {
  TimeSeries ts{sample_rate_Hz, block, ""};
  ts.validate();
  return asd_averaged(ts, ts.duration_s());
}

ASDResult asd_averaged(const TimeSeries& ts, double segment_duration_s, const AsdOptions& opt) {
  ts.validate();
  if (!(segment_duration_s > 0.0)) throw Error("asd: segment duration must be positive");
  const auto n = static_cast<std::size_t>(std::llround(segment_duration_s * ts.sample_rate_Hz));
  if (n < 2) throw Error("asd: segment shorter than two samples");
  if (n > ts.samples.size()) throw Error("asd: series shorter than one segment");

  const std::size_t hop = opt.half_overlap ? std::max<std::size_t>(1, n / 2) : n;
  const std::size_t segments = (ts.samples.size() - n) / hop + 1;

  std::vector<double> window;
  double s2 = static_cast<double>(n);
  if (opt.window == AsdWindow::Hann) {
    window.resize(n);
    s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      // Periodic Hann.
      window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
      s2 += window[i] * window[i];
    }
  }

  RealFft fft(n);
  std::vector<double> acc(n / 2 + 1, 0.0);
  std::vector<double> seg(n);
  for (std::size_t s = 0; s < segments; ++s) {
    const double* src = ts.samples.data() + s * hop;
    std::copy(src, src + n, seg.begin());
    if (opt.remove_mean) {
      const double mean = std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(n);
      for (double& v : seg) v -= mean;
    }
    std::vector<double> p = fft.power(seg.data(), window);
    fold_one_sided(p, n, ts.sample_rate_Hz, s2);
    for (std::size_t k = 0; k < p.size(); ++k)
      acc[k] += opt.averaging == AsdAveraging::Power ? p[k] : std::sqrt(p[k]);
  }

  ASDResult out;
  out.segment_count = segments;
  out.segment_duration_s = static_cast<double>(n) / ts.sample_rate_Hz;
  out.unit = ts.unit;
  out.freqs_Hz.resize(acc.size());
  out.density.resize(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) {
    out.freqs_Hz[k] = static_cast<double>(k) * ts.sample_rate_Hz / static_cast<double>(n);
    const double mean = acc[k] / static_cast<double>(segments);
    out.density[k] = opt.averaging == AsdAveraging::Power ? std::sqrt(mean) : mean;
  }
  out.method = std::string(opt.window == AsdWindow::Hann ? "hann" : "rectangular") +
               (opt.half_overlap ? ", 50% overlap" : ", no overlap") +
               (opt.averaging == AsdAveraging::Power ? ", power-averaged" : ", amplitude-averaged") + ", " +
               std::to_string(segments) + " segments";
  return out;
}

double band_sensitivity(const ASDResult& asd, double f_lo_Hz, double f_hi_Hz) {
  if (!(f_lo_Hz <= f_hi_Hz)) throw Error("band sensitivity: empty band");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < asd.freqs_Hz.size(); ++k) {
    if (asd.freqs_Hz[k] >= f_lo_Hz && asd.freqs_Hz[k] <= f_hi_Hz) {
      sum += asd.density[k];
      ++count;
    }
  }
  if (count == 0) throw Error("band sensitivity: no spectral bins in the requested band");
  return sum / static_cast<double>(count);
}

void SlopeCalibration::validate() const {
  if (slope_V_per_Hz == 0.0 || !std::isfinite(slope_V_per_Hz)) throw Error("calibration: slope must be non-zero");
  if (!(gamma_MHz_per_mT > 0.0)) throw Error("calibration: gyromagnetic ratio must be positive");
}

TimeSeries volts_to_field(const TimeSeries& ts_volts, const SlopeCalibration& cal) {
  cal.validate();
  ts_volts.validate();
  // MHz/mT equals 1e9 Hz/T.
  const double hz_per_tesla = cal.gamma_MHz_per_mT * 1e9;
  const double k = 1.0 / (cal.slope_V_per_Hz * hz_per_tesla);
  TimeSeries out{ts_volts.sample_rate_Hz, ts_volts.samples, "T"};
  for (double& v : out.samples) v *= k;
  return out;
}

ToneFit extract_tone(const TimeSeries& ts, double f0_Hz) {
  ts.validate();
  const double nyquist = 0.5 * ts.sample_rate_Hz;
  if (!(f0_Hz < nyquist))
    throw Error("extract tone: " + std::to_string(f0_Hz) + " Hz is at or above Nyquist (" + std::to_string(nyquist) +
                " Hz); the excitation is under-sampled and aliases");
  if (!(f0_Hz > 0.0)) throw Error("extract tone: frequency must be positive");

  const auto n = static_cast<Eigen::Index>(ts.samples.size());
  Eigen::MatrixXd A(n, 3);
  const Eigen::Map<const Eigen::VectorXd> y(ts.samples.data(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = 2.0 * kPi * f0_Hz * static_cast<double>(i) / ts.sample_rate_Hz;
    A(i, 0) = std::cos(w);
    A(i, 1) = std::sin(w);
    A(i, 2) = 1.0;
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::Vector3d c = qr.solve(y);
  const Eigen::VectorXd r = y - A * c;

  ToneFit out;
  out.amplitude = std::hypot(c(0), c(1));
  out.phase_rad = std::atan2(c(1), c(0));
  out.offset = c(2);
  out.residual_rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  if (n > 3) {
    const double s2 = r.squaredNorm() / static_cast<double>(n - 3);
    const Eigen::Matrix3d cov = (A.transpose() * A).inverse() * s2;
    if (out.amplitude > 0.0) {
      Eigen::Vector3d g(c(0) / out.amplitude, c(1) / out.amplitude, 0.0);
      out.sigma_amplitude = std::sqrt(std::max(0.0, double(g.transpose() * cov * g)));
    } else {
      out.sigma_amplitude = std::sqrt(std::max(0.0, 0.5 * (cov(0, 0) + cov(1, 1))));
    }
  }
  return out;
}

ShotNoiseEstimate shot_noise_limit(double pl_power_W, double contrast, double fwhm_MHz, double responsivity_A_per_W,
                                   double gamma_MHz_per_mT) {
  if (!(pl_power_W > 0.0) || !(fwhm_MHz > 0.0) || !(responsivity_A_per_W > 0.0) || !(gamma_MHz_per_mT > 0.0) ||
      !(contrast >= 0.0))
    throw Error("shot noise: inputs must be positive");
  constexpr double e = 1.602176634e-19;
  ShotNoiseEstimate out;
  out.geometry_factor = 4.0 / (3.0 * std::sqrt(3.0));
  out.photocurrent_A = pl_power_W * responsivity_A_per_W;
  out.formula = "dB = 4/(3*sqrt(3)) * fwhm / (gamma * contrast) * sqrt(2 e / I), I = P_PL * responsivity";
  if (contrast == 0.0) {
    out.sensitivity_T_per_rtHz = std::numeric_limits<double>::infinity();
    return out;
  }
  const double fwhm_Hz = fwhm_MHz * 1e6;
  const double gamma_Hz_per_T = gamma_MHz_per_mT * 1e9;
  out.sensitivity_T_per_rtHz =
      out.geometry_factor * fwhm_Hz / (gamma_Hz_per_T * contrast) * std::sqrt(2.0 * e / out.photocurrent_A);
  return out;
}

}  // namespace nvmag
