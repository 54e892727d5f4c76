#include "nvmag/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "nvmag/error.hpp"
#include "nvmag/lsq.hpp"

namespace nvmag {

void TransitionAssignment::validate() const {
  if (lines.size() < 3) throw Error("assignment: need at least three lines to determine a field vector");
  std::set<std::pair<int, int>> seen;
  for (const TransitionRef& r : lines) {
    if (r.axis < 1 || r.axis > 4) throw Error("assignment: axis label must be 1..4");
    if (!seen.insert({r.axis, static_cast<int>(r.kind)}).second)
      throw Error("assignment: duplicate entry " + std::to_string(r.axis) + ":" + std::string(nvmag::to_string(r.kind)));
  }
}

std::string TransitionAssignment::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(lines[i].axis) + ':' + std::string(nvmag::to_string(lines[i].kind));
  }
  return s;
}

TransitionAssignment TransitionAssignment::parse(std::string_view text) {
  TransitionAssignment a;
  std::stringstream ss{std::string(text)};
  std::string item;
  const auto trim = [](std::string v) {
    const auto b = v.find_first_not_of(" \t");
    const auto e = v.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
  };
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error("assignment: expected axis:kind, got '" + item + "'");
    TransitionRef r;
    const std::string axis = trim(item.substr(0, colon));
    std::size_t used = 0;
    try {
      r.axis = std::stoi(axis, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (axis.empty() || used != axis.size()) throw Error("assignment: bad axis in '" + item + "'");
    r.kind = transition_kind_from_string(trim(item.substr(colon + 1)));
    a.lines.push_back(r);
  }
  a.validate();
  return a;
}

TransitionAssignment TransitionAssignment::halbach_default() {
  return {{{1, TransitionKind::DQ}, {4, TransitionKind::DQ}, {3, TransitionKind::Minus}, {2, TransitionKind::Minus}}};
}

void InversionConfig::validate() const {
  if (!(nominal_b_mT >= 0.0) || !std::isfinite(nominal_b_mT)) throw Error("inversion: nominal field must be >= 0");
  if (!(magnitude_band > 0.0 && magnitude_band < 1.0)) throw Error("inversion: magnitude band must be in (0, 1)");
  if (multistart < 1) throw Error("inversion: multistart must be >= 1");
  if (!(seed_spread_deg >= 0.0)) throw Error("inversion: seed spread must be >= 0");
  if (!(param_tol > 0.0)) throw Error("inversion: parameter tolerance must be positive");
  if (max_iterations < 1) throw Error("inversion: max iterations must be >= 1");
  if (!(assumed_sigma_MHz > 0.0)) throw Error("inversion: assumed sigma must be positive");
  if (!lab_to_crystal.allFinite()) throw Error("inversion: rotation must be finite");
}

void Measurement::validate(std::size_t expected) const {
  if (freqs_MHz.size() != expected)
    throw Error("inversion: " + std::to_string(freqs_MHz.size()) + " frequencies for " + std::to_string(expected) +
                " assigned lines");
  for (double f : freqs_MHz)
    if (!std::isfinite(f)) throw Error("inversion: non-finite measured frequency");
  if (!sigma_MHz.empty()) {
    if (sigma_MHz.size() != freqs_MHz.size()) throw Error("inversion: sigma count differs from frequency count");
    for (double s : sigma_MHz)
      if (!(s > 0.0) || !std::isfinite(s)) throw Error("inversion: measured sigma must be positive and finite");
  }
}

namespace {

constexpr double kUnobservableStrength = 1e-6;

Vec3 d_dir_d_b(const SphericalField& s) {
  const double th = deg2rad(s.theta_deg), ph = deg2rad(s.phi_deg);
  return {std::sin(th), std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph)};
}

// Columns: d b / d(B, theta[deg], phi[deg]).
Eigen::Matrix3d spherical_jacobian(const SphericalField& s) {
  const double th = deg2rad(s.theta_deg), ph = deg2rad(s.phi_deg);
  const double k = kPi / 180.0 * s.b_m;
  Eigen::Matrix3d J;
  J.col(0) = d_dir_d_b(s);
  J.col(1) = k * Vec3(std::cos(th), -std::sin(th) * std::cos(ph), -std::sin(th) * std::sin(ph));
  J.col(2) = k * Vec3(0.0, -std::cos(th) * std::sin(ph), std::cos(th) * std::cos(ph));
  return J;
}

SphericalField from_params(const Eigen::VectorXd& x) {
  SphericalField s;
  s.b_m = x(0);
  s.theta_deg = x(1);
  s.phi_deg = x(2);
  return s;
}

class Problem {
 public:
  Problem(const Measurement& m, const SpinModelParams& p, const InversionConfig& cfg, const TransitionAssignment& a)
      : m_(m), p_(p), cfg_(cfg), a_(a), w_(static_cast<Eigen::Index>(a.lines.size())) {
    for (Eigen::Index j = 0; j < w_.size(); ++j)
      w_(j) = m.sigma_MHz.empty() ? 1.0 : 1.0 / m.sigma_MHz[static_cast<std::size_t>(j)];
  }

  bool weighted() const { return !m_.sigma_MHz.empty(); }

  // Weighted residuals and d r / d b_lab (m x 3).
  void evaluate_lab(const Vec3& b_lab, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    const Vec3 bc = cfg_.lab_to_crystal * b_lab;
    TransitionGradients g;
    const TransitionTable t = transition_frequencies(p_, bc, J ? &g : nullptr);
    const auto m = static_cast<Eigen::Index>(a_.lines.size());
    r.resize(m);
    if (J) J->resize(m, 3);
    for (Eigen::Index j = 0; j < m; ++j) {
      const TransitionRef& ref = a_.lines[static_cast<std::size_t>(j)];
      const double f = t.axis(ref.axis).frequency(ref.kind);
      r(j) = w_(j) * (std::abs(f) - m_.freqs_MHz[static_cast<std::size_t>(j)]);
      if (J) {
        const double sgn = f < 0.0 ? -1.0 : 1.0;
        J->row(j) = (w_(j) * sgn) * (g.of(ref.axis, ref.kind).transpose() * cfg_.lab_to_crystal);
      }
    }
  }

  void spherical(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    const SphericalField s = from_params(x);
    if (!J) return evaluate_lab(spherical_to_cartesian(s), r, nullptr);
    Eigen::MatrixXd Jb;
    evaluate_lab(spherical_to_cartesian(s), r, &Jb);
    *J = Jb * spherical_jacobian(s);
  }

  void cartesian(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* J) const {
    evaluate_lab(Vec3(x(0), x(1), x(2)), r, J);
  }

  double rms_MHz(const SphericalField& s) const {
    Eigen::VectorXd r;
    evaluate_lab(spherical_to_cartesian(s), r, nullptr);
    return std::sqrt((r.array() / w_.array()).square().mean());
  }

 private:
  const Measurement& m_;
  const SpinModelParams& p_;
  const InversionConfig& cfg_;
  const TransitionAssignment& a_;
  Eigen::VectorXd w_;
};

struct Solution {
  StartDiagnostics diag;
  double sigma_b = std::numeric_limits<double>::infinity();
  double sigma_theta = std::numeric_limits<double>::infinity();
  double sigma_phi = std::numeric_limits<double>::infinity();
};

constexpr double kPoleLatitude = 80.0;

std::vector<SphericalField> start_points(const InversionConfig& cfg) {
  std::vector<SphericalField> starts;
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < cfg.multistart; ++i) {
    SphericalField s;
    s.b_m = cfg.nominal_b_mT;
    s.theta_deg = cfg.theta0_deg;
    s.phi_deg = cfg.phi0_deg;
    if (i > 0) {
      s.b_m = cfg.nominal_b_mT * (1.0 + 0.5 * cfg.magnitude_band * unit(rng));
      s.theta_deg = std::clamp(cfg.theta0_deg + cfg.seed_spread_deg * unit(rng), -90.0, 90.0);
      s.phi_deg = cfg.phi0_deg + cfg.seed_spread_deg * unit(rng);
    }
    s.phi_deg = wrap_degrees(s.phi_deg);
    starts.push_back(s);
  }
  return starts;
}

void fill_uncertainties(const Problem& prob, std::size_t n_lines, const InversionConfig& cfg, Solution& sol) {
  const SphericalField& s = sol.diag.end;
  Eigen::VectorXd x(3);
  x << s.b_m, s.theta_deg, s.phi_deg;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  prob.spherical(x, r, &J);

  double s2 = 1.0;
  if (!prob.weighted()) {
    const double dof = static_cast<double>(n_lines) - 3.0;
    s2 = dof > 0.0 ? r.squaredNorm() / dof : cfg.assumed_sigma_MHz * cfg.assumed_sigma_MHz;
  }
  Eigen::MatrixXd cov;
  if (lsq::covariance(J, cov)) {
    sol.sigma_b = std::sqrt(std::max(0.0, cov(0, 0) * s2));
    sol.sigma_theta = std::sqrt(std::max(0.0, cov(1, 1) * s2));
    sol.sigma_phi = std::sqrt(std::max(0.0, cov(2, 2) * s2));
    return;
  }
  // On a pole the longitude drops out; keep the (B, theta) block.
  Eigen::MatrixXd cov2;
  if (lsq::covariance(J.leftCols(2), cov2)) {
    sol.sigma_b = std::sqrt(std::max(0.0, cov2(0, 0) * s2));
    sol.sigma_theta = std::sqrt(std::max(0.0, cov2(1, 1) * s2));
  }
}

Solution solve_from(const Problem& prob, const InversionConfig& cfg, const SphericalField& start,
                    std::size_t n_lines) {
  lsq::Options opt;
  opt.param_tol = cfg.param_tol;
  opt.max_iterations = cfg.max_iterations;
  const double lo = cfg.b_min(), hi = cfg.b_max();

  auto project_sph = [lo, hi](Eigen::VectorXd& x) {
    x(0) = std::clamp(x(0), lo, hi);
    x(1) = std::clamp(x(1), -90.0, 90.0);
    x(2) = wrap_degrees(x(2));
  };
  auto project_cart = [lo, hi, &cfg](Eigen::VectorXd& x) {
    const double n = x.norm();
    if (n == 0.0) {
      SphericalField s{lo, cfg.theta0_deg, cfg.phi0_deg, false};
      x = spherical_to_cartesian(s);
    } else if (n < lo || n > hi) {
      x *= std::clamp(n, lo, hi) / n;
    }
  };
  const double scale_b = std::max(cfg.nominal_b_mT, 1e-12);

  Solution sol;
  sol.diag.start = start;
  lsq::Result res;
  SphericalField end = start;

  if (std::abs(start.theta_deg) <= kPoleLatitude) {
    Eigen::VectorXd x0(3), scale(3);
    x0 << start.b_m, start.theta_deg, start.phi_deg;
    scale << scale_b, 90.0, 180.0;
    res = lsq::levenberg_marquardt([&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                                       Eigen::MatrixXd* J) { prob.spherical(x, r, J); },
                                   x0, scale, opt, project_sph);
    end = from_params(res.x);
  }
  if (std::abs(end.theta_deg) > kPoleLatitude) {
    // Longitude is ill-conditioned near the poles; continue in Cartesian form.
    const int used = res.iterations;
    Eigen::VectorXd x0 = spherical_to_cartesian(end);
    Eigen::VectorXd scale = Eigen::VectorXd::Constant(3, scale_b);
    opt.max_iterations = std::max(1, cfg.max_iterations - used);
    res = lsq::levenberg_marquardt([&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                                       Eigen::MatrixXd* J) { prob.cartesian(x, r, J); },
                                   x0, scale, opt, project_cart);
    res.iterations += used;
    end = cartesian_to_spherical(Vec3(res.x(0), res.x(1), res.x(2)));
    end.b_m = std::clamp(end.b_m, lo, hi);
  }

  sol.diag.end = end;
  sol.diag.chi2 = res.chi2;
  sol.diag.iterations = res.iterations;
  sol.diag.converged = res.converged;
  sol.diag.message = res.message;
  sol.diag.residual_rms_MHz = prob.rms_MHz(end);
  fill_uncertainties(prob, n_lines, cfg, sol);
  return sol;
}

std::vector<Solution> run_starts(const Measurement& measured, const SpinModelParams& p, const InversionConfig& cfg,
                                 const TransitionAssignment& assign, const Problem& prob) {
  p.validate();
  cfg.validate();
  assign.validate();
  measured.validate(assign.lines.size());
  std::vector<Solution> out;
  for (const SphericalField& s : start_points(cfg)) out.push_back(solve_from(prob, cfg, s, assign.lines.size()));
  return out;
}

double reference_sigma(const Measurement& measured, const InversionConfig& cfg) {
  if (measured.sigma_MHz.empty()) return cfg.assumed_sigma_MHz;
  double acc = 0.0;
  for (double s : measured.sigma_MHz) acc += s * s;
  return std::sqrt(acc / static_cast<double>(measured.sigma_MHz.size()));
}

// A minimum competes with the best one only if it also explains the data.
bool consistent(const Solution& s, double sigma_ref) { return s.diag.residual_rms_MHz <= kMismatchFactor * sigma_ref; }

double merge_radius(double sigma, double floor) {
  return std::isfinite(sigma) ? std::max(3.0 * sigma, floor) : std::numeric_limits<double>::infinity();
}

bool same_minimum(const Solution& rep, const SphericalField& other) {
  const SphericalField& a = rep.diag.end;
  if (std::abs(a.b_m - other.b_m) > merge_radius(rep.sigma_b, kMergeFloorB_mT)) return false;
  if (std::abs(a.theta_deg - other.theta_deg) > merge_radius(rep.sigma_theta, kMergeFloorDeg)) return false;
  // Longitude distances shrink towards the poles.
  const double c = std::cos(deg2rad(a.theta_deg));
  const double dphi = std::abs(wrap_degrees(a.phi_deg - other.phi_deg)) * c;
  return dphi <= std::max(3.0 * rep.sigma_phi * c, kMergeFloorDeg);
}

bool all_finite(const Solution& s) {
  return std::isfinite(s.sigma_b) && std::isfinite(s.sigma_theta) && std::isfinite(s.sigma_phi);
}

std::size_t best_index(const std::vector<Solution>& sols) {
  std::size_t best = sols.size();
  for (std::size_t i = 0; i < sols.size(); ++i) {
    if (!sols[i].diag.converged) continue;
    if (best == sols.size() || sols[i].diag.chi2 < sols[best].diag.chi2) best = i;
  }
  return best;
}

}  // namespace

Prediction predict_frequencies(const SpinModelParams& p, const SphericalField& field,
                               const TransitionAssignment& assign, const Eigen::Matrix3d& lab_to_crystal) {
  p.validate();
  assign.validate();
  const TransitionTable t = transition_frequencies(p, lab_to_crystal * spherical_to_cartesian(field));
  Prediction out;
  for (const TransitionRef& r : assign.lines) {
    const AxisTransitions& a = t.axis(r.axis);
    out.freqs_MHz.push_back(std::abs(a.frequency(r.kind)));
    out.strengths.push_back(a.strength_of(r.kind));
    if (a.strength_of(r.kind) < kUnobservableStrength) out.unobservable = true;
  }
  return out;
}

InversionResult invert(const Measurement& measured, const SpinModelParams& p, const InversionConfig& cfg,
                       const TransitionAssignment& assign) {
  const Problem prob(measured, p, cfg, assign);
  const std::vector<Solution> sols = run_starts(measured, p, cfg, assign, prob);

  InversionResult out;
  for (const Solution& s : sols) out.starts.push_back(s.diag);
  const std::size_t best = best_index(sols);
  if (best == sols.size()) {
    std::string msg = "inversion: no start converged";
    for (std::size_t i = 0; i < sols.size(); ++i)
      msg += "; start " + std::to_string(i) + ": " + sols[i].diag.message;
    throw Error(msg);
  }

  const Solution& b = sols[best];
  out.field = b.diag.end;
  out.field.degenerate = out.field.b_m == 0.0;
  out.sigma_b = b.sigma_b;
  out.sigma_theta = b.sigma_theta;
  out.sigma_phi = b.sigma_phi;
  out.residual_rms_MHz = b.diag.residual_rms_MHz;
  out.converged = true;

  const double sigma_ref = reference_sigma(measured, cfg);
  out.model_mismatch = !consistent(b, sigma_ref);

  // When the best fit itself is poor every converged start is a candidate.
  out.unique = all_finite(b) && !out.field.degenerate;
  for (const Solution& s : sols)
    if (s.diag.converged && !same_minimum(b, s.diag.end) && (out.model_mismatch || consistent(s, sigma_ref)))
      out.unique = false;

  const double tol = 1e-9 * std::max(cfg.nominal_b_mT, 1e-12);
  out.at_bound = std::abs(out.field.b_m - cfg.b_min()) <= tol || std::abs(out.field.b_m - cfg.b_max()) <= tol;

  const Prediction pred = predict_frequencies(p, out.field, assign, cfg.lab_to_crystal);
  out.unobservable_line = pred.unobservable;

  if (out.model_mismatch)
    out.warnings.push_back("model mismatch: residual " + std::to_string(out.residual_rms_MHz) + " MHz exceeds 5x " +
                           std::to_string(sigma_ref) + " MHz");
  if (out.at_bound) out.warnings.push_back("field magnitude pinned at the band edge");
  if (out.unobservable_line) out.warnings.push_back("an assigned transition has vanishing drive strength");
  if (!out.unique) out.warnings.push_back("multistart solutions disagree; reconstruction not unique");
  return out;
}

UniquenessReport uniqueness_scan(const Measurement& measured, const SpinModelParams& p, const InversionConfig& cfg,
                                 const TransitionAssignment& assign) {
  if (cfg.multistart < 8) throw Error("uniqueness scan: multistart must be >= 8");
  const Problem prob(measured, p, cfg, assign);
  std::vector<Solution> sols = run_starts(measured, p, cfg, assign, prob);

  UniquenessReport rep;
  std::vector<Solution> converged;
  for (Solution& s : sols) {
    if (s.diag.converged)
      converged.push_back(std::move(s));
    else
      ++rep.unconverged_starts;
  }
  std::stable_sort(converged.begin(), converged.end(),
                   [](const Solution& a, const Solution& b) { return a.diag.chi2 < b.diag.chi2; });

  std::vector<Solution> reps;
  for (const Solution& s : converged) {
    auto it = std::find_if(reps.begin(), reps.end(), [&](const Solution& r) { return same_minimum(r, s.diag.end); });
    if (it != reps.end()) {
      ++rep.minima[static_cast<std::size_t>(it - reps.begin())].members;
      continue;
    }
    reps.push_back(s);
    LocalMinimum m;
    m.field = s.diag.end;
    m.field.degenerate = m.field.b_m == 0.0;
    m.sigma_b = s.sigma_b;
    m.sigma_theta = s.sigma_theta;
    m.sigma_phi = s.sigma_phi;
    m.chi2 = s.diag.chi2;
    m.residual_rms_MHz = s.diag.residual_rms_MHz;
    m.members = 1;
    rep.minima.push_back(m);
  }
  const double sigma_ref = reference_sigma(measured, cfg);
  for (std::size_t i = 0; i < reps.size(); ++i) rep.minima[i].consistent = consistent(reps[i], sigma_ref);
  rep.degenerate = !rep.minima.empty() && rep.minima.front().field.degenerate;
  int competing = 0;
  for (const LocalMinimum& m : rep.minima) competing += m.consistent ? 1 : 0;
  if (competing == 0) competing = static_cast<int>(rep.minima.size());
  rep.unique = competing == 1 && !rep.degenerate && all_finite(reps.front());
  return rep;
}

TransitionAssignment nearest_assignment(std::vector<double> measured_MHz, const SpinModelParams& p,
                                        const InversionConfig& cfg) {
  SphericalField seed{cfg.nominal_b_mT, cfg.theta0_deg, cfg.phi0_deg, false};
  const TransitionTable t = transition_frequencies(p, cfg.lab_to_crystal * spherical_to_cartesian(seed));
  struct Candidate {
    TransitionRef ref;
    double freq;
  };
  std::vector<Candidate> pool;
  for (int axis = 1; axis <= 4; ++axis)
    for (TransitionKind k : {TransitionKind::Minus, TransitionKind::Plus, TransitionKind::DQ})
      if (t.axis(axis).strength_of(k) >= kUnobservableStrength)
        pool.push_back({{axis, k}, std::abs(t.axis(axis).frequency(k))});
  if (measured_MHz.size() > pool.size()) throw Error("assignment: more measured lines than observable transitions");

  std::sort(measured_MHz.begin(), measured_MHz.end());
  TransitionAssignment a;
  std::vector<bool> used(pool.size(), false);
  for (double f : measured_MHz) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!used[i] && (best == pool.size() || std::abs(pool[i].freq - f) < std::abs(pool[best].freq - f))) best = i;
    used[best] = true;
    a.lines.push_back(pool[best].ref);
  }
  a.validate();
  return a;
}

}  // namespace nvmag
