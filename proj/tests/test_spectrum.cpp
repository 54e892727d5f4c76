#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nvmag/error.hpp"
#include "nvmag/spectrum.hpp"

using namespace nvmag;

namespace {

constexpr double kFwhm = 11.48;
const std::vector<double> kCenters = {4043.6, 4252.3, 4609.5, 4648.0};

SpectrumModel halbach_like(double amplitude = 1.0) {
  SpectrumModel m;
  m.fwhm_MHz = kFwhm;
  m.baseline = 0.05;
  const double amps[] = {1.0, -0.8, 0.6, 0.9};
  for (std::size_t i = 0; i < kCenters.size(); ++i) m.lines.push_back({kCenters[i], amplitude * amps[i]});
  return m;
}

// Noise sigma for a given SNR on the extremum height of the unit-amplitude line.
double sigma_for_snr(double snr) { return kDLorentzianPeak / snr; }

// Golden-section search for the maximum of g on [a, b].
template <class G>
double argmax(G g, double a, double b) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  for (int i = 0; i < 200; ++i) {
    if (g(c) > g(d)) b = d;
    else a = c;
    c = b - r * (b - a);
    d = a + r * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("dlorentzian is odd about the center and zero there") {
  const Lineshape l{4000.0, kFwhm, 1.7};
  CHECK(dlorentzian(4000.0, l) == 0.0);
  for (double d : {0.01, 0.5, 3.0, 5.74, 20.0, 400.0}) CHECK(dlorentzian(4000.0 + d, l) == -dlorentzian(4000.0 - d, l));
  CHECK(dlorentzian(3995.0, l) > 0.0);
}

TEST_CASE("dlorentzian extrema match a dense numerical scan") {
  const Lineshape l{100.0, 8.0, -2.5};
  const auto mag = [&](double f) { return std::abs(dlorentzian(f, l)); };
  // Coarse grid, then golden-section refinement around the best grid point.
  double best = 80.0;
  for (double f = 80.0; f < 100.0; f += 1e-3)
    if (mag(f) > mag(best)) best = f;
  const double fmax = argmax(mag, best - 0.01, best + 0.01);
  const double expect = 100.0 - 4.0 / std::sqrt(3.0);
  CHECK(fmax == doctest::Approx(expect).epsilon(1e-9));
  CHECK(mag(fmax) == doctest::Approx(2.5 * kDLorentzianPeak).epsilon(1e-12));
}

TEST_CASE("analytic Jacobian matches central differences") {
  SpectrumModel m = halbach_like();
  const std::vector<double> f = resonance_windows(kCenters);
  const Eigen::MatrixXd J = model_jacobian(f, m);
  const Eigen::VectorXd p = pack_parameters(m);
  const int n = m.components();
  REQUIRE(J.cols() == p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    // Parameter scale: linewidth for centers and fwhm, magnitude for amplitudes, 1 for the baseline.
    double scale = 1.0;
    if (k < n || k == 2 * n) scale = kFwhm;
    else if (k < 2 * n) scale = std::abs(p(k));
    const double h = 1e-4 * scale;
    Eigen::VectorXd hi = p, lo = p;
    hi(k) += h;
    lo(k) -= h;
    const SpectrumModel mh = unpack_parameters(hi, n), ml = unpack_parameters(lo, n);
    const double col_scale = J.col(k).cwiseAbs().maxCoeff();
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double fd = (mh.evaluate(f[i]) - ml.evaluate(f[i])) / (2.0 * h);
      CHECK(std::abs(fd - J(static_cast<Eigen::Index>(i), k)) <= 1e-6 * col_scale);
    }
  }
}

TEST_CASE("pack and unpack are inverse") {
  const SpectrumModel m = halbach_like();
  const SpectrumModel r = unpack_parameters(pack_parameters(m), m.components());
  CHECK(r.fwhm_MHz == m.fwhm_MHz);
  CHECK(r.baseline == m.baseline);
  for (int i = 0; i < m.components(); ++i) {
    CHECK(r.lines[i].center_MHz == m.lines[i].center_MHz);
    CHECK(r.lines[i].amplitude == m.lines[i].amplitude);
  }
}

TEST_CASE("synthesize: trivial cases and determinism") {
  const std::vector<double> f = resonance_windows(kCenters);
  SpectrumModel flat = halbach_like(0.0);
  const SweepTrace t0 = synthesize(flat, f, 0.0, 1);
  for (double v : t0.values) CHECK(v == flat.baseline);

  SpectrumModel one;
  one.fwhm_MHz = kFwhm;
  one.baseline = -0.3;
  one.lines = {{4252.3, 0.7}};
  const SweepTrace t1 = synthesize(one, f, 0.0, 1);
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(t1.values[i] == dlorentzian(f[i], {4252.3, kFwhm, 0.7}) + one.baseline);

  const SweepTrace a = synthesize(halbach_like(), f, 0.05, 42), b = synthesize(halbach_like(), f, 0.05, 42);
  const SweepTrace c = synthesize(halbach_like(), f, 0.05, 43);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
}

TEST_CASE("resonance windows hold the requested points around every center") {
  const std::vector<double> f = resonance_windows(kCenters, 164, 1.0);
  REQUIRE(f.size() == 164);
  CHECK(std::is_sorted(f.begin(), f.end()));
  CHECK(std::adjacent_find(f.begin(), f.end()) == f.end());
  for (double c : kCenters) {
    const auto near = std::count_if(f.begin(), f.end(), [&](double x) { return std::abs(x - c) <= 10.0; });
    CHECK(near >= 15);
  }
  CHECK_THROWS_AS(resonance_windows(kCenters, 164, 0.0), Error);
}

TEST_CASE("trace validation") {
  SweepTrace t;
  t.freqs_MHz = {1.0, 2.0, 3.0};
  t.values = {0.0, 1.0};
  CHECK_THROWS_AS(t.validate(), Error);
  t.values = {0.0, std::nan(""), 1.0};
  CHECK_THROWS_AS(t.validate(), Error);
  t.values = {0.0, 1.0, 2.0};
  t.freqs_MHz = {1.0, 3.0, 2.0};
  CHECK_THROWS_AS(t.validate(), Error);
  t.freqs_MHz = {3.0, 2.0, 1.0};
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("initial guess on a noiseless trace is within a quarter linewidth") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SpectrumModel g = initial_guess(synthesize(halbach_like(), f, 0.0, 1));
  REQUIRE(g.components() == 4);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(g.lines[i].center_MHz - kCenters[i]) < kFwhm / 4.0);
  CHECK(std::abs(g.fwhm_MHz - kFwhm) < 0.25 * kFwhm);
  // Amplitude signs follow the lobe order.
  CHECK(g.lines[1].amplitude < 0.0);
  CHECK(g.lines[0].amplitude > 0.0);
}

TEST_CASE("initial guess reports how many features it found") {
  SpectrumModel three = halbach_like();
  three.lines.pop_back();
  const std::vector<double> f = resonance_windows(kCenters);
  std::string what;
  try {
    initial_guess(synthesize(three, f, sigma_for_snr(20.0), 5));
  } catch (const Error& e) {
    what = e.what();
  }
  CHECK(what.find("found 3 of 4") != std::string::npos);
  CHECK(initial_guess(synthesize(three, f, sigma_for_snr(20.0), 5), 3).components() == 3);
}

TEST_CASE("pure noise yields no fabricated features") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SpectrumModel quiet = halbach_like(0.0);
  int rejected = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    try {
      initial_guess(synthesize(quiet, f, 0.03, seed));
    } catch (const Error&) {
      ++rejected;
    }
  }
  CHECK(rejected == 200);
}

TEST_CASE("robust noise estimate tracks the injected sigma despite the lines") {
  const std::vector<double> f = resonance_windows(kCenters);
  for (double sigma : {0.01, 0.03, 0.1}) {
    double sum = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) sum += robust_noise(synthesize(halbach_like(), f, sigma, seed));
    CHECK(sum / 20.0 == doctest::Approx(sigma).epsilon(0.15));
  }
}

TEST_CASE("noiseless fit from a perturbed guess recovers the centers") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SpectrumModel truth = halbach_like();
  SpectrumModel guess = truth;
  for (int i = 0; i < 4; ++i) {
    guess.lines[i].center_MHz += (i % 2 ? -1.0 : 1.0) * kFwhm / 4.0;
    guess.lines[i].amplitude *= 1.2;
  }
  guess.fwhm_MHz *= 1.1;
  guess.baseline = 0.0;
  const SpectrumFit fit = fit_spectrum(synthesize(truth, f, 0.0, 1), guess);
  CHECK(fit.converged);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(fit.model.lines[i].center_MHz - kCenters[i]) < 1e-3);
  CHECK(fit.model.fwhm_MHz == doctest::Approx(kFwhm).epsilon(1e-6));
  CHECK(fit.residual_rms < 1e-8);
  CHECK(fit.warnings.empty());
}

TEST_CASE("Monte Carlo at SNR 20: accuracy and honest uncertainties") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SpectrumModel truth = halbach_like();
  const int runs = 100;
  std::vector<std::vector<double>> centers(4);
  std::vector<double> mean_sigma(4, 0.0);
  double fwhm_sum = 0.0, worst_fwhm = 0.0;
  for (int s = 0; s < runs; ++s) {
    const SweepTrace t = synthesize(truth, f, sigma_for_snr(20.0), 1000 + s);
    const SpectrumFit fit = fit_spectrum(t, initial_guess(t));
    REQUIRE(fit.converged);
    for (int i = 0; i < 4; ++i) {
      centers[i].push_back(fit.model.lines[i].center_MHz);
      mean_sigma[i] += fit.sigma_center[i] / runs;
      CHECK(fit.sigma_center[i] >= 0.0);
    }
    fwhm_sum += fit.model.fwhm_MHz;
    worst_fwhm = std::max(worst_fwhm, std::abs(fit.model.fwhm_MHz / kFwhm - 1.0));
  }
  CHECK(worst_fwhm < 0.05);
  CHECK(std::abs(fwhm_sum / runs - kFwhm) < 0.14);
  for (int i = 0; i < 4; ++i) {
    double m = 0.0, v = 0.0;
    for (double c : centers[i]) m += c / runs;
    for (double c : centers[i]) v += (c - m) * (c - m) / (runs - 1);
    double sq = 0.0;
    for (double c : centers[i]) sq += (c - kCenters[i]) * (c - kCenters[i]) / runs;
    CHECK(std::sqrt(sq) < 0.2);
    const double ratio = std::sqrt(v) / mean_sigma[i];
    CHECK(ratio > 1.0 / 1.5);
    CHECK(ratio < 1.5);
  }
}

TEST_CASE("fit is invariant to scan direction") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SweepTrace t = synthesize(halbach_like(), f, sigma_for_snr(20.0), 7);
  SweepTrace r = t;
  std::reverse(r.freqs_MHz.begin(), r.freqs_MHz.end());
  std::reverse(r.values.begin(), r.values.end());
  const SpectrumFit a = fit_spectrum(t, initial_guess(t));
  const SpectrumFit b = fit_spectrum(r, initial_guess(r));
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(a.model.lines[i].center_MHz - b.model.lines[i].center_MHz) <= 1e-10);
    CHECK(std::abs(a.model.lines[i].amplitude - b.model.lines[i].amplitude) <= 1e-10);
  }
  CHECK(std::abs(a.model.fwhm_MHz - b.model.fwhm_MHz) <= 1e-10);
}

TEST_CASE("baseline shift and amplitude scale equivariance") {
  const std::vector<double> f = resonance_windows(kCenters);
  const SweepTrace t = synthesize(halbach_like(), f, sigma_for_snr(20.0), 9);
  const SpectrumModel g = initial_guess(t);
  const SpectrumFit ref = fit_spectrum(t, g);

  const double c = 3.25;
  SweepTrace shifted = t;
  for (double& v : shifted.values) v += c;
  SpectrumModel gs = g;
  gs.baseline += c;
  const SpectrumFit fs = fit_spectrum(shifted, gs);
  CHECK(std::abs(fs.model.baseline - (ref.model.baseline + c)) <= 1e-8);
  CHECK(std::abs(fs.model.fwhm_MHz - ref.model.fwhm_MHz) <= 1e-8);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(fs.model.lines[i].center_MHz - ref.model.lines[i].center_MHz) <= 1e-8);
    CHECK(std::abs(fs.model.lines[i].amplitude - ref.model.lines[i].amplitude) <= 1e-8);
  }

  const double s = -4.0;
  SweepTrace scaled = t;
  for (double& v : scaled.values) v *= s;
  SpectrumModel gk = g;
  for (auto& l : gk.lines) l.amplitude *= s;
  gk.baseline *= s;
  const SpectrumFit fk = fit_spectrum(scaled, gk);
  CHECK(std::abs(fk.model.baseline - s * ref.model.baseline) <= 1e-8 * std::abs(s));
  CHECK(std::abs(fk.model.fwhm_MHz - ref.model.fwhm_MHz) <= 1e-8);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(fk.model.lines[i].center_MHz - ref.model.lines[i].center_MHz) <= 1e-8);
    CHECK(std::abs(fk.model.lines[i].amplitude - s * ref.model.lines[i].amplitude) <= 1e-8 * std::abs(s));
  }
}

TEST_CASE("fit rejects NaN and warns on short traces") {
  const std::vector<double> f = resonance_windows(kCenters);
  SweepTrace t = synthesize(halbach_like(), f, 0.0, 1);
  const SpectrumModel g = initial_guess(t);
  t.values[10] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit_spectrum(t, g), Error);

  // 60 points for 9 shape parameters: below the 8-per-parameter recommendation.
  const std::vector<double> few = resonance_windows(kCenters, 60, 1.0);
  const SweepTrace s = synthesize(halbach_like(), few, 0.0, 1);
  const SpectrumFit fit = fit_spectrum(s, g);
  CHECK_FALSE(fit.warnings.empty());

  SpectrumModel bad = g;
  bad.fwhm_MHz = 0.0;
  CHECK_THROWS_AS(fit_spectrum(synthesize(halbach_like(), f, 0.0, 1), bad), Error);
}

TEST_CASE("component count is configurable from 1 to 8") {
  std::vector<double> centers;
  SpectrumModel m;
  m.fwhm_MHz = 6.0;
  for (int i = 0; i < 8; ++i) {
    centers.push_back(3000.0 + 60.0 * i);
    m.lines.push_back({centers.back(), i % 2 ? 1.0 : -1.0});
  }
  const std::vector<double> f = resonance_windows(centers, 400, 0.5);
  const SweepTrace t = synthesize(m, f, 0.01, 3);
  const SpectrumFit fit = fit_spectrum(t, initial_guess(t, 8));
  REQUIRE(fit.model.components() == 8);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(fit.model.lines[i].center_MHz - centers[i]) < 0.1);
  CHECK_THROWS_AS(initial_guess(t, 9), Error);
  CHECK_THROWS_AS(initial_guess(t, 0), Error);
}
