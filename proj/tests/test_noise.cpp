#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "nvmag/error.hpp"
#include "nvmag/noise.hpp"

using namespace nvmag;

namespace {

constexpr double kPi = 3.14159265358979323846;

TimeSeries white(double sigma, double fs, double seconds, std::uint64_t seed, const std::string& unit = "T") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  TimeSeries ts{fs, {}, unit};
  const auto count = static_cast<std::size_t>(std::llround(fs * seconds));
  ts.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ts.samples.push_back(n(rng));
  return ts;
}

// Textbook one-sided PSD of one block by direct DFT.
std::vector<double> naive_psd(const std::vector<double>& x, double fs) {
  const std::size_t n = x.size();
  std::vector<double> psd(n / 2 + 1);
  for (std::size_t k = 0; k < psd.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * t % n) / static_cast<double>(n));
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    psd[k] = (edge ? 1.0 : 2.0) * std::norm(acc) / (fs * static_cast<double>(n));
  }
  return psd;
}

double mean(const std::vector<double>& v, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += v[i];
  return s / static_cast<double>(to - from);
}

double rel_std(const std::vector<double>& v, std::size_t from, std::size_t to) {
  const double m = mean(v, from, to);
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += (v[i] - m) * (v[i] - m);
  return std::sqrt(s / static_cast<double>(to - from - 1)) / m;
}

}  // namespace

TEST_CASE("100 s at 1 kHz in 1 s segments gives 100 segments and 1 Hz bins") {
  const ASDResult a = asd_averaged(white(1.0, 1000.0, 100.0, 1), 1.0);
  CHECK(a.segment_count == 100);
  CHECK(a.resolution_Hz() == doctest::Approx(1.0));
  REQUIRE(a.freqs_Hz.size() == 501);
  CHECK(a.freqs_Hz.front() == 0.0);
  CHECK(a.freqs_Hz.back() == doctest::Approx(500.0));
  CHECK(a.freqs_Hz.size() == a.density.size());
  CHECK(a.method.find("rectangular") != std::string::npos);
}

TEST_CASE("single-block ASD agrees with a direct DFT") {
  const TimeSeries ts = white(0.3, 200.0, 1.0, 4);
  const ASDResult a = asd_single(ts.samples, ts.sample_rate_Hz);
  const std::vector<double> ref = naive_psd(ts.samples, ts.sample_rate_Hz);
  REQUIRE(a.density.size() == ref.size());
  for (std::size_t k = 0; k < ref.size(); ++k)
    CHECK(a.density[k] * a.density[k] == doctest::Approx(ref[k]).epsilon(1e-9));

  // Odd length: no Nyquist bin.
  std::vector<double> odd(ts.samples.begin(), ts.samples.begin() + 101);
  const ASDResult b = asd_single(odd, 200.0);
  const std::vector<double> ref_odd = naive_psd(odd, 200.0);
  REQUIRE(b.density.size() == ref_odd.size());
  for (std::size_t k = 0; k < ref_odd.size(); ++k)
    CHECK(b.density[k] * b.density[k] == doctest::Approx(ref_odd[k]).epsilon(1e-9));
}

TEST_CASE("a bin-centred tone appears at its RMS amplitude over the square root of ENBW") {
  const double fs = 1000.0, amp = 2.5e-6, f0 = 37.0;
  TimeSeries ts{fs, {}, "T"};
  for (int i = 0; i < 10000; ++i) ts.samples.push_back(amp * std::sin(2.0 * kPi * f0 * i / fs + 0.4));
  const ASDResult a = asd_averaged(ts, 1.0);
  const double enbw = 1.0;  // rectangular window, 1 s segments
  CHECK(a.density[37] == doctest::Approx(amp / std::sqrt(2.0) / std::sqrt(enbw)).epsilon(1e-9));
  CHECK(a.density[36] < 1e-9 * amp);
}

TEST_CASE("white noise gives a flat density sigma sqrt(2 / fs)") {
  const double sigma = 2e-9, fs = 1000.0;
  const ASDResult a = asd_averaged(white(sigma, fs, 100.0, 7), 1.0);
  const double expect = sigma * std::sqrt(2.0 / fs);
  CHECK(mean(a.density, 1, a.density.size() - 1) == doctest::Approx(expect).epsilon(0.05));
  // Flat: every 50 Hz stretch agrees with the expectation.
  for (std::size_t lo = 1; lo + 50 < a.density.size(); lo += 50)
    CHECK(mean(a.density, lo, lo + 50) == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("per-segment Parseval: the one-sided PSD integrates to the variance") {
  const TimeSeries ts = white(1.3, 1000.0, 1.0, 9);
  std::vector<double> x = ts.samples;
  double m = 0.0;
  for (double v : x) m += v / static_cast<double>(x.size());
  double var = 0.0;
  for (double& v : x) {
    v -= m;
    var += v * v / static_cast<double>(x.size());
  }
  const ASDResult a = asd_single(x, ts.sample_rate_Hz);
  double integral = 0.0;
  for (double d : a.density) integral += d * d * a.resolution_Hz();
  CHECK(integral == doctest::Approx(var).epsilon(0.01));
}

TEST_CASE("averaging 100 segments shrinks the scatter by ten") {
  const TimeSeries ts = white(1.0, 1000.0, 100.0, 17);
  const ASDResult one = asd_averaged(TimeSeries{ts.sample_rate_Hz, {ts.samples.begin(), ts.samples.begin() + 1000}, "T"}, 1.0);
  const ASDResult avg = asd_averaged(ts, 1.0);
  const double ratio = rel_std(avg.density, 1, 500) / rel_std(one.density, 1, 500);
  CHECK(ratio == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("amplitude averaging is available and biased low for noise") {
  AsdOptions opt;
  opt.averaging = AsdAveraging::Amplitude;
  const TimeSeries ts = white(1.0, 1000.0, 100.0, 3);
  const ASDResult amp = asd_averaged(ts, 1.0, opt);
  const ASDResult pow = asd_averaged(ts, 1.0);
  // Mean of a Rayleigh amplitude is sqrt(pi)/2 of its RMS.
  CHECK(mean(amp.density, 1, 500) / mean(pow.density, 1, 500) == doctest::Approx(std::sqrt(kPi) / 2.0).epsilon(0.02));
  CHECK(amp.method.find("amplitude") != std::string::npos);
}

TEST_CASE("Hann with half overlap keeps the white-noise level") {
  AsdOptions opt;
  opt.window = AsdWindow::Hann;
  opt.half_overlap = true;
  const ASDResult a = asd_averaged(white(1.0, 1000.0, 100.0, 5), 1.0, opt);
  CHECK(a.segment_count == 199);
  CHECK(mean(a.density, 2, 499) == doctest::Approx(std::sqrt(2.0 / 1000.0)).epsilon(0.05));
}

TEST_CASE("band sensitivity") {
  ASDResult flat;
  for (int k = 0; k <= 500; ++k) {
    flat.freqs_Hz.push_back(k);
    flat.density.push_back(4.53e-10);
  }
  flat.segment_duration_s = 1.0;
  CHECK(band_sensitivity(flat, 60.0, 90.0) == doctest::Approx(4.53e-10));
  CHECK_THROWS_AS(band_sensitivity(flat, 90.0, 60.0), Error);
  CHECK_THROWS_AS(band_sensitivity(flat, 60.4, 60.6), Error);

  // A 50 Hz power-line component lifts a band that contains it, not the 60-90 Hz band.
  TimeSeries ts = white(1.0, 1000.0, 100.0, 11);
  for (std::size_t i = 0; i < ts.samples.size(); ++i) ts.samples[i] += 0.5 * std::sin(2.0 * kPi * 50.0 * i / 1000.0);
  const ASDResult a = asd_averaged(ts, 1.0);
  const double floor = std::sqrt(2.0 / 1000.0);
  CHECK(band_sensitivity(a, 40.0, 60.0) > 1.2 * floor);
  CHECK(band_sensitivity(a, 60.0, 90.0) == doctest::Approx(floor).epsilon(0.05));
}

TEST_CASE("volts to field: 12.69 Hz per root Hz is about 453 pT per root Hz") {
  const double slope = -3.0e-6;  // V per Hz
  const SlopeCalibration cal{slope, 28.024};
  // Voltage density rho = 12.69 Hz/rtHz * |slope|.
  const double rho = 12.69 * std::abs(slope);
  const double fs = 1000.0;
  const TimeSeries v = white(rho / std::sqrt(2.0 / fs), fs, 100.0, 23, "V");
  const TimeSeries b = volts_to_field(v, cal);
  CHECK(b.unit == "T");
  const double field_density = band_sensitivity(asd_averaged(b, 1.0), 60.0, 90.0);
  CHECK(field_density == doctest::Approx(453e-12).epsilon(0.05));
  CHECK(12.69 / 28.024e9 == doctest::Approx(453e-12).epsilon(1e-3));

  TimeSeries zero{fs, std::vector<double>(100, 0.0), "V"};
  for (double x : volts_to_field(zero, cal).samples) CHECK(x == 0.0);

  TimeSeries twice = v;
  for (double& x : twice.samples) x *= 2.0;
  const TimeSeries b2 = volts_to_field(twice, cal);
  for (std::size_t i = 0; i < b.samples.size(); i += 997) CHECK(b2.samples[i] == doctest::Approx(2.0 * b.samples[i]).epsilon(1e-15));

  CHECK_THROWS_AS(volts_to_field(v, SlopeCalibration{0.0, 28.024}), Error);
}

TEST_CASE("volts to field commutes with the averaged ASD") {
  const SlopeCalibration cal{2.2e-5, 28.024};
  const TimeSeries v = white(1e-3, 1000.0, 20.0, 31, "V");
  const ASDResult av = asd_averaged(v, 1.0);
  const ASDResult ab = asd_averaged(volts_to_field(v, cal), 1.0);
  const double k = 1.0 / (cal.slope_V_per_Hz * cal.gamma_MHz_per_mT * 1e9);
  for (std::size_t i = 0; i < av.density.size(); ++i)
    CHECK(ab.density[i] == doctest::Approx(std::abs(k) * av.density[i]).epsilon(1e-12));
}

TEST_CASE("tone extraction: noiseless amplitude and phase invariance") {
  const double fs = 1000.0, f0 = 10.0, amp = 0.7e-6;
  double first = -1.0;
  for (double phase : {0.0, 0.3, 1.2, 2.9, -2.0}) {
    TimeSeries ts{fs, {}, "T"};
    for (int i = 0; i < 10000; ++i) ts.samples.push_back(amp * std::cos(2.0 * kPi * f0 * i / fs - phase) + 1e-7);
    const ToneFit t = extract_tone(ts, f0);
    CHECK(t.amplitude == doctest::Approx(amp).epsilon(1e-3));
    CHECK(t.offset == doctest::Approx(1e-7).epsilon(1e-9));
    CHECK(std::remainder(t.phase_rad - phase, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-9));
    if (first < 0.0) first = t.amplitude;
    CHECK(std::abs(t.amplitude - first) <= 1e-10 * amp);
  }
  TimeSeries quiet{fs, std::vector<double>(1000, 0.0), "T"};
  CHECK(extract_tone(quiet, f0).amplitude == 0.0);
}

TEST_CASE("tone extraction at SNR 10 stays within 3 sigma") {
  const double fs = 1000.0, f0 = 10.0, amp = 0.7e-6, sigma = amp / 10.0;
  int within = 0;
  double zsq = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    TimeSeries ts = white(sigma, fs, 10.0, seed);
    for (std::size_t i = 0; i < ts.samples.size(); ++i) ts.samples[i] += amp * std::cos(2.0 * kPi * f0 * i / fs + 1.0);
    const ToneFit t = extract_tone(ts, f0);
    const double z = (t.amplitude - amp) / t.sigma_amplitude;
    if (std::abs(z) <= 3.0) ++within;
    zsq += z * z / 100.0;
  }
  CHECK(within >= 98);
  CHECK(std::sqrt(zsq) == doctest::Approx(1.0).epsilon(0.25));
}

TEST_CASE("tone at or above Nyquist is rejected as aliased") {
  TimeSeries ts = white(1.0, 1000.0, 1.0, 2);
  std::string what;
  try {
    extract_tone(ts, 500.0);
  } catch (const Error& e) {
    what = e.what();
  }
  CHECK(what.find("Nyquist") != std::string::npos);
  CHECK(what.find("alias") != std::string::npos);
  CHECK_THROWS_AS(extract_tone(ts, 750.0), Error);
  CHECK_NOTHROW(extract_tone(ts, 499.0));
}

TEST_CASE("shot-noise limit: scaling, Mainz regime, zero contrast") {
  const ShotNoiseEstimate a = shot_noise_limit(1e-3, 0.016, 0.35, 0.4);
  const ShotNoiseEstimate b = shot_noise_limit(2e-3, 0.016, 0.35, 0.4);
  CHECK(a.sensitivity_T_per_rtHz / b.sensitivity_T_per_rtHz == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK_FALSE(a.formula.empty());
  CHECK(a.geometry_factor == doctest::Approx(4.0 / (3.0 * std::sqrt(3.0))));

  // 0.5% of an assumed 0.5 W pump reaches the detector.
  const ShotNoiseEstimate mainz = shot_noise_limit(0.005 * 0.5, 0.016, 0.35, 0.4);
  CHECK(mainz.sensitivity_T_per_rtHz > 11e-12 / 2.0);
  CHECK(mainz.sensitivity_T_per_rtHz < 11e-12 * 2.0);

  CHECK(shot_noise_limit(1e-3, 0.0, 0.35, 0.4).sensitivity_T_per_rtHz == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(shot_noise_limit(0.0, 0.016, 0.35, 0.4), Error);
}

TEST_CASE("segment length checks") {
  const TimeSeries ts = white(1.0, 1000.0, 1.0, 2);
  CHECK_THROWS_AS(asd_averaged(ts, 0.001), Error);
  CHECK_THROWS_AS(asd_averaged(ts, 2.0), Error);
  TimeSeries bad = ts;
  bad.samples[3] = std::nan("");
  CHECK_THROWS_AS(asd_averaged(bad, 0.5), Error);
}
