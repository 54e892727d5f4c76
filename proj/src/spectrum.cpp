#include "nvmag/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "nvmag/error.hpp"
#include "nvmag/lsq.hpp"

namespace nvmag {

double dlorentzian(double f_MHz, const Lineshape& line) {
  const double u = (f_MHz - line.center_MHz) / (0.5 * line.fwhm_MHz);
  const double d = 1.0 + u * u;
  return line.amplitude * (-2.0 * u / (d * d));
}

double SpectrumModel::evaluate(double f_MHz) const {
  double v = baseline;
  for (const Resonance& r : lines) v += dlorentzian(f_MHz, {r.center_MHz, fwhm_MHz, r.amplitude});
  return v;
}

Lineshape SpectrumModel::line(int i) const {
  const Resonance& r = lines.at(static_cast<std::size_t>(i));
  return {r.center_MHz, fwhm_MHz, r.amplitude};
}

void SpectrumModel::validate() const {
  if (lines.empty() || components() > kMaxComponents)
    throw Error("spectrum model: component count must be 1.." + std::to_string(kMaxComponents));
  if (!(fwhm_MHz > 0.0) || !std::isfinite(fwhm_MHz)) throw Error("spectrum model: fwhm must be positive");
  for (const Resonance& r : lines)
    if (!std::isfinite(r.center_MHz) || !std::isfinite(r.amplitude))
      throw Error("spectrum model: non-finite line parameter");
  if (!std::isfinite(baseline)) throw Error("spectrum model: non-finite baseline");
}

void SweepTrace::validate() const {
  if (freqs_MHz.size() != values.size()) throw Error("trace: frequency and value arrays differ in length");
  if (freqs_MHz.size() < 2) throw Error("trace: need at least two samples");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(freqs_MHz[i]) || !std::isfinite(values[i]))
      throw Error("trace: non-finite sample at index " + std::to_string(i));
  const bool ascending = freqs_MHz[1] > freqs_MHz[0];
  for (std::size_t i = 1; i < freqs_MHz.size(); ++i) {
    const bool ok = ascending ? freqs_MHz[i] > freqs_MHz[i - 1] : freqs_MHz[i] < freqs_MHz[i - 1];
    if (!ok) throw Error("trace: frequencies not strictly monotone at index " + std::to_string(i));
  }
}

SweepTrace synthesize(const SpectrumModel& model, std::span<const double> freqs, double noise_sigma,
                      std::uint64_t seed) {
  model.validate();
  if (!(noise_sigma >= 0.0)) throw Error("synthesize: noise sigma must be non-negative");
  SweepTrace t;
  t.freqs_MHz.assign(freqs.begin(), freqs.end());
  t.values.resize(freqs.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    t.values[i] = model.evaluate(freqs[i]);
    if (noise_sigma > 0.0) t.values[i] += noise_sigma * noise(rng);
  }
  return t;
}

std::vector<double> resonance_windows(std::span<const double> centers, std::size_t n_points, double step) {
  if (!(step > 0.0)) throw Error("resonance windows: step must be positive");
  if (centers.empty() || n_points == 0) return {};
  std::vector<long long> mid;
  for (double c : centers) mid.push_back(std::llround(c / step));

  std::set<long long> grid;
  for (long long radius = 0; grid.size() < n_points; ++radius)
    for (long long m : mid)
      for (long long k = m - radius; k <= m + radius; ++k) grid.insert(k);

  std::vector<long long> pts(grid.begin(), grid.end());
  auto dist = [&](long long k) {
    long long d = std::numeric_limits<long long>::max();
    for (long long m : mid) d = std::min(d, std::llabs(k - m));
    return d;
  };
  std::stable_sort(pts.begin(), pts.end(), [&](long long a, long long b) { return dist(a) < dist(b); });
  pts.resize(n_points);
  std::sort(pts.begin(), pts.end());

  std::vector<double> out;
  out.reserve(pts.size());
  for (long long k : pts) out.push_back(static_cast<double>(k) * step);
  return out;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

SweepTrace sorted_ascending(const SweepTrace& t) {
  SweepTrace s = t;
  if (s.freqs_MHz.size() >= 2 && s.freqs_MHz.front() > s.freqs_MHz.back()) {
    std::reverse(s.freqs_MHz.begin(), s.freqs_MHz.end());
    std::reverse(s.values.begin(), s.values.end());
  }
  return s;
}

// Neighbours i-1, i are considered contiguous when their spacing is not a gap.
std::vector<bool> contiguity(const std::vector<double>& f) {
  std::vector<double> spacing;
  for (std::size_t i = 1; i < f.size(); ++i) spacing.push_back(f[i] - f[i - 1]);
  const double typical = median(spacing);
  std::vector<bool> c(f.size(), false);
  for (std::size_t i = 1; i < f.size(); ++i) c[i] = (f[i] - f[i - 1]) <= 1.5 * typical;
  return c;
}

struct Lobe {
  std::size_t begin = 0, end = 0;  // [begin, end)
  std::size_t peak = 0;
  int sign = 0;
};

}  // namespace

double robust_noise(const SweepTrace& trace) {
  const SweepTrace t = sorted_ascending(trace);
  const std::vector<bool> contiguous = contiguity(t.freqs_MHz);
  // Second differences suppress the smooth lineshape far better than first
  // differences on densely sampled resonances. Var(y0 - 2y1 + y2) = 6 sigma^2.
  std::vector<double> diffs;
  for (std::size_t i = 2; i < t.values.size(); ++i)
    if (contiguous[i] && contiguous[i - 1]) diffs.push_back(t.values[i] - 2.0 * t.values[i - 1] + t.values[i - 2]);
  if (diffs.empty()) return 0.0;
  const double m = median(diffs);
  for (double& d : diffs) d = std::abs(d - m);
  return 1.482602218505602 * median(diffs) / std::sqrt(6.0);
}

SpectrumModel initial_guess(const SweepTrace& trace, int components) {
  trace.validate();
  if (components < 1 || components > SpectrumModel::kMaxComponents)
    throw Error("initial guess: component count must be 1.." + std::to_string(SpectrumModel::kMaxComponents));
  const SweepTrace t = sorted_ascending(trace);
  const std::vector<double>& f = t.freqs_MHz;
  const std::size_t n = f.size();

  const double baseline = median(t.values);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = t.values[i] - baseline;
  double rmax = 0.0;
  for (double x : r) rmax = std::max(rmax, std::abs(x));
  const double threshold = std::max(5.0 * robust_noise(t), 1e-9 * rmax);
  const std::vector<bool> contiguous = contiguity(f);

  // Same-sign contiguous runs that reach above the threshold.
  std::vector<Lobe> lobes;
  for (std::size_t i = 0; i < n;) {
    const int s = r[i] > 0.0 ? 1 : (r[i] < 0.0 ? -1 : 0);
    std::size_t j = i + 1;
    while (j < n && contiguous[j] && (r[j] > 0.0 ? 1 : (r[j] < 0.0 ? -1 : 0)) == s) ++j;
    Lobe lobe{i, j, i, s};
    for (std::size_t k = i; k < j; ++k)
      if (std::abs(r[k]) > std::abs(r[lobe.peak])) lobe.peak = k;
    if (s != 0 && std::abs(r[lobe.peak]) > threshold && rmax > 0.0) lobes.push_back(lobe);
    i = j;
  }

  struct Candidate {
    std::size_t left, right;  // indices into lobes
    double strength;
  };
  std::vector<Candidate> candidates;
  for (std::size_t a = 0; a + 1 < lobes.size(); ++a) {
    const Lobe& L = lobes[a];
    const Lobe& R = lobes[a + 1];
    if (L.sign == R.sign) continue;
    bool gap = false;
    for (std::size_t k = L.peak + 1; k <= R.peak; ++k)
      if (!contiguous[k]) gap = true;
    if (gap) continue;
    const double hl = std::abs(r[L.peak]), hr = std::abs(r[R.peak]);
    if (hl > 3.0 * hr || hr > 3.0 * hl) continue;
    candidates.push_back({a, a + 1, hl + hr});
  }
  // Pairs that straddle two neighbouring resonances sit much further apart
  // than the lobes of one resonance, and all resonances share one width.
  if (candidates.size() > 1) {
    std::vector<double> sep;
    for (const Candidate& c : candidates) sep.push_back(f[lobes[c.right].peak] - f[lobes[c.left].peak]);
    const double limit = 2.5 * *std::min_element(sep.begin(), sep.end());
    std::vector<Candidate> kept;
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (sep[i] <= limit) kept.push_back(candidates[i]);
    candidates = std::move(kept);
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& x, const Candidate& y) { return x.strength > y.strength; });

  std::vector<bool> used(lobes.size(), false);
  std::vector<Candidate> chosen;
  for (const Candidate& c : candidates) {
    if (static_cast<int>(chosen.size()) == components) break;
    if (used[c.left] || used[c.right]) continue;
    used[c.left] = used[c.right] = true;
    chosen.push_back(c);
  }
  if (static_cast<int>(chosen.size()) < components)
    throw Error("initial guess: found " + std::to_string(chosen.size()) + " of " + std::to_string(components) +
                " dispersive features");

  SpectrumModel m;
  m.baseline = baseline;
  std::vector<double> widths;
  for (const Candidate& c : chosen) {
    const std::size_t pl = lobes[c.left].peak, pr = lobes[c.right].peak;
    const double fmid = 0.5 * (f[pl] + f[pr]);
    double center = fmid, best = std::numeric_limits<double>::infinity();
    for (std::size_t k = pl; k < pr; ++k) {
      if ((r[k] > 0.0) == (r[k + 1] > 0.0) && r[k] != 0.0) continue;
      const double fc = r[k] == r[k + 1] ? f[k] : f[k] + (f[k + 1] - f[k]) * r[k] / (r[k] - r[k + 1]);
      if (std::abs(fc - fmid) < best) {
        best = std::abs(fc - fmid);
        center = fc;
      }
    }
    const double amplitude = 0.5 * (r[pl] - r[pr]) / kDLorentzianPeak;
    m.lines.push_back({center, amplitude});
    widths.push_back(std::sqrt(3.0) * (f[pr] - f[pl]));
  }
  m.fwhm_MHz = median(widths);
  std::sort(m.lines.begin(), m.lines.end(),
            [](const Resonance& a, const Resonance& b) { return a.center_MHz < b.center_MHz; });
  return m;
}

Eigen::VectorXd pack_parameters(const SpectrumModel& m) {
  const int n = m.components();
  Eigen::VectorXd p(2 * n + 2);
  for (int i = 0; i < n; ++i) {
    p(i) = m.lines[static_cast<std::size_t>(i)].center_MHz;
    p(n + i) = m.lines[static_cast<std::size_t>(i)].amplitude;
  }
  p(2 * n) = m.fwhm_MHz;
  p(2 * n + 1) = m.baseline;
  return p;
}

SpectrumModel unpack_parameters(const Eigen::VectorXd& p, int components) {
  SpectrumModel m;
  m.lines.resize(static_cast<std::size_t>(components));
  for (int i = 0; i < components; ++i) {
    m.lines[static_cast<std::size_t>(i)].center_MHz = p(i);
    m.lines[static_cast<std::size_t>(i)].amplitude = p(components + i);
  }
  m.fwhm_MHz = p(2 * components);
  m.baseline = p(2 * components + 1);
  return m;
}

Eigen::MatrixXd model_jacobian(std::span<const double> freqs, const SpectrumModel& m) {
  const int n = m.components();
  const double h = 0.5 * m.fwhm_MHz;
  Eigen::MatrixXd J(static_cast<Eigen::Index>(freqs.size()), 2 * n + 2);
  for (std::size_t row = 0; row < freqs.size(); ++row) {
    const auto i = static_cast<Eigen::Index>(row);
    double d_fwhm = 0.0;
    for (int k = 0; k < n; ++k) {
      const Resonance& line = m.lines[static_cast<std::size_t>(k)];
      const double u = (freqs[row] - line.center_MHz) / h;
      const double d = 1.0 + u * u;
      const double g = -2.0 * u / (d * d);
      const double dg = (6.0 * u * u - 2.0) / (d * d * d);
      J(i, k) = -line.amplitude * dg / h;
      J(i, n + k) = g;
      d_fwhm += -line.amplitude * dg * u / (2.0 * h);
    }
    J(i, 2 * n) = d_fwhm;
    J(i, 2 * n + 1) = 1.0;
  }
  return J;
}

SpectrumFit fit_spectrum(const SweepTrace& trace, const SpectrumModel& guess, const FitOptions& opt) {
  trace.validate();
  guess.validate();
  const SweepTrace t = sorted_ascending(trace);
  const int n = guess.components();
  const auto n_params = static_cast<std::size_t>(2 * n + 2);

  SpectrumFit out;
  if (t.values.size() <= n_params)
    throw Error("fit: " + std::to_string(t.values.size()) + " points cannot constrain " +
                std::to_string(n_params) + " parameters");
  if (t.values.size() < 8 * (n_params - 1))
    out.warnings.push_back("trace has " + std::to_string(t.values.size()) + " points; at least " +
                           std::to_string(8 * (n_params - 1)) + " recommended");

  const Eigen::Map<const Eigen::VectorXd> y(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
  const std::span<const double> freqs(t.freqs_MHz);

  auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* J) {
    const SpectrumModel m = unpack_parameters(p, n);
    r.resize(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) r(i) = m.evaluate(freqs[static_cast<std::size_t>(i)]) - y(i);
    if (J) *J = model_jacobian(freqs, m);
  };
  auto project = [n](Eigen::VectorXd& p) {
    // The lineshape depends on fwhm only through its magnitude.
    p(2 * n) = std::abs(p(2 * n));
  };

  double yscale = y.cwiseAbs().maxCoeff();
  if (!(yscale > 0.0)) yscale = 1.0;
  Eigen::VectorXd scale(2 * n + 2);
  for (int i = 0; i < n; ++i) {
    scale(i) = guess.fwhm_MHz;
    scale(n + i) = yscale;
  }
  scale(2 * n) = guess.fwhm_MHz;
  scale(2 * n + 1) = yscale;

  lsq::Options lo;
  lo.max_iterations = opt.max_iterations;
  lo.param_tol = opt.param_tol;
  lo.chi2_tol = opt.chi2_tol;
  const lsq::Result res = lsq::levenberg_marquardt(residual, pack_parameters(guess), scale, lo, project);

  out.model = unpack_parameters(res.x, n);
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.message = res.message;
  const auto n_pts = static_cast<double>(y.size());
  out.residual_rms = std::sqrt(res.chi2 / n_pts);

  Eigen::MatrixXd cov;
  const bool full_rank = lsq::covariance(res.jacobian, cov);
  if (!full_rank) {
    out.converged = false;
    out.message = "singular normal equations (rank-deficient Jacobian); " + res.message;
  }
  const double s2 = res.chi2 / (n_pts - static_cast<double>(n_params));
  auto sigma = [&](int i) { return full_rank ? std::sqrt(std::max(0.0, cov(i, i) * s2)) : std::numeric_limits<double>::infinity(); };
  for (int i = 0; i < n; ++i) {
    out.sigma_center.push_back(sigma(i));
    out.sigma_amplitude.push_back(sigma(n + i));
  }
  out.sigma_fwhm = sigma(2 * n);
  out.sigma_baseline = sigma(2 * n + 1);

  // Report components in ascending center order.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return out.model.lines[static_cast<std::size_t>(a)].center_MHz < out.model.lines[static_cast<std::size_t>(b)].center_MHz;
  });
  SpectrumFit sorted = out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto src = static_cast<std::size_t>(order[k]);
    sorted.model.lines[k] = out.model.lines[src];
    sorted.sigma_center[k] = out.sigma_center[src];
    sorted.sigma_amplitude[k] = out.sigma_amplitude[src];
  }
  return sorted;
}

}  // namespace nvmag
