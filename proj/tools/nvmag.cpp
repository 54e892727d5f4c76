// nvmag: command-line front end for sweep curves, synthetic data, spectrum
// fitting, field inversion, noise analysis and grid-scan maps.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "nvmag/config.hpp"
#include "nvmag/csv.hpp"
#include "nvmag/error.hpp"
#include "nvmag/inversion.hpp"
#include "nvmag/noise.hpp"
#include "nvmag/scanpipe.hpp"
#include "nvmag/spectrum.hpp"
#include "nvmag/spinmodel.hpp"

using namespace nvmag;

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : csv::split(text)) {
    double v = 0.0;
    if (!csv::parse(item, v)) throw Error(what + ": not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

Vec3 parse_direction(const std::string& d) {
  if (d == "100") return Vec3(1, 0, 0);
  if (d == "110") return Vec3(1, 1, 0);
  if (d == "111") return Vec3(1, 1, 1);
  if (d == "halbach") return spherical_to_cartesian({1.0, 35.46, -2.43, false});
  const auto v = parse_list(d, "--direction");
  if (v.size() != 3) throw Error("--direction: expected 100, 110, 111, halbach or x,y,z");
  return Vec3(v[0], v[1], v[2]);
}

// Writes to the named file, or stdout for "" or "-".
template <typename F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  write(out);
  if (!out) throw Error("write failed: " + path);
}

std::string fmt(double v) { return csv::format(v); }

void print_inversion(std::ostream& os, const InversionResult& r, const TransitionAssignment& a) {
  os << "assignment: " << a.to_string() << '\n'
     << "B_mT: " << fmt(r.field.b_m) << '\n'
     << "theta_deg: " << fmt(r.field.theta_deg) << '\n'
     << "phi_deg: " << fmt(r.field.phi_deg) << '\n'
     << "sigma_B: " << fmt(r.sigma_b) << '\n'
     << "sigma_theta: " << fmt(r.sigma_theta) << '\n'
     << "sigma_phi: " << fmt(r.sigma_phi) << '\n'
     << "residual_MHz: " << fmt(r.residual_rms_MHz) << '\n'
     << "unique_flag: " << (r.unique ? 1 : 0) << '\n'
     << "model_mismatch: " << (r.model_mismatch ? 1 : 0) << '\n'
     << "at_bound: " << (r.at_bound ? 1 : 0) << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-diamond ODMR vector magnetometry toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file")->check(CLI::ExistingFile);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "transition frequencies versus field magnitude or angle");
  std::string direction = "100", angle, out_path;
  double bmax = 150.0, b_fixed = 104.5, fixed_deg = 0.0, from_deg = -90.0, to_deg = 90.0;
  std::size_t points = 151;
  sweep->add_option("--direction", direction, "100, 110, 111, halbach or x,y,z")
      ->check(CLI::Validator(
          [](std::string& d) {
            try {
              parse_direction(d);
            } catch (const Error& e) {
              return std::string(e.what());
            }
            return std::string();
          },
          "DIRECTION"));
  sweep->add_option("--bmax-mT", bmax, "largest field magnitude");
  sweep->add_option("--points", points, "number of sweep values")->check(CLI::PositiveNumber);
  sweep->add_option("--angle", angle, "sweep an angle instead: theta or phi")->check(CLI::IsMember({"theta", "phi"}));
  sweep->add_option("--b-mT", b_fixed, "field magnitude for angle sweeps");
  sweep->add_option("--fixed-deg", fixed_deg, "value of the angle that is held fixed");
  sweep->add_option("--from-deg", from_deg);
  sweep->add_option("--to-deg", to_deg);
  sweep->add_option("-o,--out", out_path, "output CSV (default stdout)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic scans, traces or time series");
  std::string synth_kind = "scan", synth_out;
  double snr = 20.0, density_pT = 453.0, fs = 1000.0, duration = 100.0, tone_T = 0.0, tone_Hz = 10.0;
  double syn_b = 104.5, syn_theta = 35.46, syn_phi = -2.43;
  std::uint64_t seed = 1;
  bool uniform = false;
  synth->add_option("--kind", synth_kind, "scan, trace or noise")->check(CLI::IsMember({"scan", "trace", "noise"}));
  synth->add_option("-o,--out", synth_out, "output directory (scan) or file")->required();
  synth->add_option("--snr", snr, "extremum height over noise sigma; 0 for noiseless");
  synth->add_option("--seed", seed);
  synth->add_flag("--uniform", uniform, "scan: no field gradients");
  synth->add_option("--b-mT", syn_b);
  synth->add_option("--theta-deg", syn_theta);
  synth->add_option("--phi-deg", syn_phi);
  synth->add_option("--density-pT", density_pT, "noise: white field-noise density");
  synth->add_option("--fs-Hz", fs, "noise: sample rate");
  synth->add_option("--duration-s", duration, "noise: length");
  synth->add_option("--tone-T", tone_T, "noise: added tone amplitude");
  synth->add_option("--tone-Hz", tone_Hz, "noise: tone frequency");

  // fit
  auto* fit = app.add_subcommand("fit", "fit derivative-Lorentzian lines to one trace");
  std::string fit_in;
  int components = 4;
  fit->add_option("-i,--in", fit_in, "trace CSV (freq_MHz, signal)")->required()->check(CLI::ExistingFile);
  fit->add_option("--components", components)->check(CLI::Range(1, SpectrumModel::kMaxComponents));

  // invert
  auto* inv = app.add_subcommand("invert", "resonance frequencies to field magnitude and angles");
  std::string freqs_text, sigmas_text, assign_text;
  std::optional<double> nominal, theta0, phi0, band;
  std::optional<int> multistart;
  inv->add_option("--freqs", freqs_text, "comma-separated line positions in MHz")->required();
  inv->add_option("--sigmas", sigmas_text, "comma-separated uncertainties in MHz");
  inv->add_option("--nominal-mT", nominal);
  inv->add_option("--theta0-deg", theta0);
  inv->add_option("--phi0-deg", phi0);
  inv->add_option("--band", band, "relative magnitude band");
  inv->add_option("--multistart", multistart);
  inv->add_option("--assign", assign_text, "auto or axis:kind list, e.g. 1:dq,4:dq,3:minus,2:minus");

  // asd
  auto* asd = app.add_subcommand("asd", "averaged amplitude spectral density of a time series");
  std::string asd_in, asd_out, band_text;
  double segment = 1.0;
  std::optional<double> slope;
  bool hann = false, overlap = false, amp_avg = false;
  asd->add_option("-i,--in", asd_in, "time series CSV (t_s, value)")->required()->check(CLI::ExistingFile);
  asd->add_option("-o,--out", asd_out, "ASD CSV (default stdout)");
  asd->add_option("--segment-s", segment);
  asd->add_option("--band", band_text, "lo,hi in Hz; prints the mean density");
  asd->add_option("--slope-V-per-Hz", slope, "convert volts to tesla first");
  asd->add_flag("--hann", hann);
  asd->add_flag("--overlap", overlap, "50% segment overlap");
  asd->add_flag("--amplitude-average", amp_avg);

  // map
  auto* map = app.add_subcommand("map", "full grid-scan pipeline");
  std::string map_in, map_out;
  bool raster = false;
  int threads = -1;
  map->add_option("-i,--in", map_in, "scan CSV file or directory")->required();
  map->add_option("-o,--out", map_out, "output directory")->required();
  map->add_flag("--raster", raster, "also write 16-bit PGM rasters");
  map->add_option("--threads", threads);

  // stats
  auto* stats = app.add_subcommand("stats", "means and standard errors over a region of a field map");
  std::string stats_in, region_text;
  stats->add_option("-i,--in", stats_in, "field_map.csv")->required()->check(CLI::ExistingFile);
  stats->add_option("--region", region_text, "y_min,y_max,z_min,z_max in mm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : PipelineConfig::load(config_path);

    if (*sweep) {
      std::vector<CurvePoint> curves;
      if (angle.empty()) {
        curves = sweep_vs_field(cfg.spin, parse_direction(direction), linspace(0.0, bmax, points));
      } else {
        AngleSweep s;
        s.b_m = b_fixed;
        s.swept = angle == "theta" ? SweptAngle::Theta : SweptAngle::Phi;
        s.fixed_deg = fixed_deg;
        s.values = linspace(from_deg, to_deg, points);
        curves = sweep_vs_angle(cfg.spin, s);
      }
      with_output(out_path, [&](std::ostream& os) { csv::write_curves(os, curves); });
    } else if (*synth) {
      if (synth_kind == "scan") {
        SyntheticScanSpec spec;
        spec.snr = snr;
        spec.seed = seed;
        spec.b0_mT = syn_b;
        spec.theta0_deg = syn_theta;
        spec.phi0_deg = syn_phi;
        if (uniform) spec.db_dy = spec.db_dz = spec.dtheta_dy = spec.dtheta_dz = spec.dphi_dy = spec.dphi_dz = 0.0;
        const SyntheticScan scan = synthesize_scan(spec, cfg.spin);
        // The truth goes one level down so the output directory can be ingested as is.
        std::filesystem::create_directories(std::filesystem::path(synth_out) / "truth");
        with_output((std::filesystem::path(synth_out) / "scan.csv").string(),
                    [&](std::ostream& os) { write_scan(os, scan.records); });
        with_output((std::filesystem::path(synth_out) / "truth" / "field_map.csv").string(),
                    [&](std::ostream& os) { write_field_map(os, scan.truth); });
      } else if (synth_kind == "trace") {
        SyntheticScanSpec spec;
        spec.ny = spec.nz = 1;
        spec.y0_mm = spec.z0_mm = 0.0;
        spec.b0_mT = syn_b;
        spec.theta0_deg = syn_theta;
        spec.phi0_deg = syn_phi;
        spec.snr = snr;
        spec.seed = seed;
        const SyntheticScan scan = synthesize_scan(spec, cfg.spin);
        with_output(synth_out, [&](std::ostream& os) { csv::write_trace(os, scan.records[0].trace); });
      } else {
        // White noise with one-sided density d: per-sample sigma = d sqrt(fs / 2).
        TimeSeries ts;
        ts.sample_rate_Hz = fs;
        ts.unit = "T";
        const auto n = static_cast<std::size_t>(std::llround(duration * fs));
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> noise(0.0, density_pT * 1e-12 * std::sqrt(fs / 2.0));
        ts.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i)
          ts.samples[i] = noise(rng) + tone_T * std::cos(2.0 * kPi * tone_Hz * static_cast<double>(i) / fs);
        with_output(synth_out, [&](std::ostream& os) { csv::write_time_series(os, ts); });
      }
    } else if (*fit) {
      const SweepTrace trace = csv::read_trace(fit_in);
      const SpectrumFit r = fit_spectrum(trace, initial_guess(trace, components));
      std::cout << "line,center_MHz,sigma_center_MHz,amplitude,sigma_amplitude\n";
      for (int i = 0; i < r.model.components(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        std::cout << i + 1 << ',' << fmt(r.model.lines[k].center_MHz) << ',' << fmt(r.sigma_center[k]) << ','
                  << fmt(r.model.lines[k].amplitude) << ',' << fmt(r.sigma_amplitude[k]) << '\n';
      }
      std::cout << "# fwhm_MHz: " << fmt(r.model.fwhm_MHz) << " +- " << fmt(r.sigma_fwhm) << '\n'
                << "# baseline: " << fmt(r.model.baseline) << " +- " << fmt(r.sigma_baseline) << '\n'
                << "# residual_rms: " << fmt(r.residual_rms) << '\n'
                << "# converged: " << (r.converged ? "yes" : "no") << " (" << r.message << ")\n";
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      if (!r.converged) return 1;
    } else if (*inv) {
      if (nominal) cfg.inversion.nominal_b_mT = *nominal;
      if (theta0) cfg.inversion.theta0_deg = *theta0;
      if (phi0) cfg.inversion.phi0_deg = *phi0;
      if (band) cfg.inversion.magnitude_band = *band;
      if (multistart) cfg.inversion.multistart = *multistart;
      Measurement m;
      m.freqs_MHz = parse_list(freqs_text, "--freqs");
      if (!sigmas_text.empty()) m.sigma_MHz = parse_list(sigmas_text, "--sigmas");
      std::optional<TransitionAssignment> a = cfg.assignment;
      if (!assign_text.empty()) {
        a = assign_text == "auto" ? std::nullopt : std::optional(TransitionAssignment::parse(assign_text));
      }
      if (a && a->lines.size() != m.freqs_MHz.size()) {
        // A configured assignment sized for another line count does not apply.
        if (!assign_text.empty()) throw Error("--assign lists a different number of lines than --freqs");
        a.reset();
      }
      if (!a) {
        // Nearest-predicted matching pairs lines in ascending order.
        std::vector<std::size_t> idx(m.freqs_MHz.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return m.freqs_MHz[i] < m.freqs_MHz[j]; });
        Measurement sorted;
        for (auto i : idx) {
          sorted.freqs_MHz.push_back(m.freqs_MHz[i]);
          if (i < m.sigma_MHz.size()) sorted.sigma_MHz.push_back(m.sigma_MHz[i]);
        }
        if (!m.sigma_MHz.empty() && m.sigma_MHz.size() != m.freqs_MHz.size())
          throw Error("--sigmas count differs from --freqs");
        m = sorted;
      }
      const TransitionAssignment assign = a ? *a : nearest_assignment(m.freqs_MHz, cfg.spin, cfg.inversion);
      print_inversion(std::cout, invert(m, cfg.spin, cfg.inversion, assign), assign);
    } else if (*asd) {
      TimeSeries ts = csv::read_time_series(asd_in);
      if (slope) ts = volts_to_field(ts, {*slope, cfg.spin.gamma_MHz_per_mT});
      AsdOptions opt;
      opt.window = hann ? AsdWindow::Hann : AsdWindow::Rectangular;
      opt.half_overlap = overlap;
      opt.averaging = amp_avg ? AsdAveraging::Amplitude : AsdAveraging::Power;
      const ASDResult r = asd_averaged(ts, segment, opt);
      if (!band_text.empty()) {
        const auto b = parse_list(band_text, "--band");
        if (b.size() != 2) throw Error("--band: expected lo,hi");
        std::cerr << "band " << fmt(b[0]) << "-" << fmt(b[1]) << " Hz: " << fmt(band_sensitivity(r, b[0], b[1]))
                  << ' ' << r.unit << "/sqrt(Hz) (" << r.method << ")\n";
      }
      if (!asd_out.empty() || band_text.empty())
        with_output(asd_out, [&](std::ostream& os) { csv::write_asd(os, r); });
    } else if (*map) {
      if (threads >= 0) cfg.threads = threads;
      const IngestResult in = ingest(map_in, cfg.y_step_mm, cfg.z_step_mm);
      for (const auto& w : in.warnings) std::cerr << "warning: " << w << '\n';
      const FieldMap fm = process(in.records, cfg);
      for (const auto& w : fm.warnings) std::cerr << "warning: " << w << '\n';
      EmitOptions eo;
      eo.raster = raster;
      const auto files = emit(fm, map_out, eo);
      std::size_t ok = 0;
      for (const auto& p : fm.pixels) ok += p.status == PixelStatus::Ok;
      std::cout << "pixels: " << fm.pixels.size() << " (" << ok << " ok), grid " << fm.grid.ny << " x "
                << fm.grid.nz << ", " << fm.grid.missing.size() << " missing\n";
      for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
      if (cfg.central) {
        const CentralStats s = central_stats(fm, *cfg.central);
        std::cout << "central B_mT: " << fmt(s.b_mT.mean) << " +- " << fmt(s.b_mT.standard_error)
                  << "\ncentral theta_deg: " << fmt(s.theta_deg.mean) << " +- " << fmt(s.theta_deg.standard_error)
                  << "\ncentral phi_deg: " << fmt(s.phi_deg.mean) << " +- " << fmt(s.phi_deg.standard_error) << '\n';
      }
    } else if (*stats) {
      const auto rows = read_field_map(stats_in);
      Region region;
      if (!region_text.empty()) {
        region = Region::parse(region_text);
      } else if (cfg.central) {
        region = *cfg.central;
      } else {
        throw Error("stats: no --region and no stats.region in the config");
      }
      const CentralStats s = central_stats(rows, region);
      std::cout << "quantity,mean,standard_error,n\n"
                << "B_mT," << fmt(s.b_mT.mean) << ',' << fmt(s.b_mT.standard_error) << ',' << s.pixels << '\n'
                << "theta_deg," << fmt(s.theta_deg.mean) << ',' << fmt(s.theta_deg.standard_error) << ','
                << s.pixels << '\n'
                << "phi_deg," << fmt(s.phi_deg.mean) << ',' << fmt(s.phi_deg.standard_error) << ',' << s.pixels
                << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
