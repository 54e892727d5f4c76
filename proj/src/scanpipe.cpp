#include "nvmag/scanpipe.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "nvmag/csv.hpp"
#include "nvmag/error.hpp"

namespace nvmag {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string position_text(double y, double z) {
  return "(" + csv::format(y) + ", " + csv::format(z) + ") mm";
}

bool position_less(double ya, double za, double yb, double zb) {
  return ya < yb || (ya == yb && za < zb);
}

// Appends the position blocks of one long-format table. `seen` maps a
// position to the source that first supplied it, across all inputs.
void collect_blocks(const csv::Table& t, const std::string& source, std::vector<ScanRecord>& out,
                    std::map<std::pair<double, double>, std::string>& seen) {
  if (!t.header.empty() && t.header.size() < 4)
    throw Error(source + ": expected columns y_mm, z_mm, freq_MHz, signal");
  ScanRecord* current = nullptr;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = source + ":" + std::to_string(t.line_numbers[i]);
    if (r.size() < 4) throw Error(where + ": expected 4 columns, found " + std::to_string(r.size()));
    for (std::size_t c = 0; c < 4; ++c)
      if (!std::isfinite(r[c])) throw Error(where + ": non-finite value");
    const std::pair<double, double> key{r[0], r[1]};
    if (!current || current->y_mm != key.first || current->z_mm != key.second) {
      const auto [it, inserted] = seen.emplace(key, where);
      if (!inserted)
        throw Error("duplicate position " + position_text(key.first, key.second) + ": " + where +
                    " repeats " + it->second);
      out.push_back({key.first, key.second, {}, where});
      current = &out.back();
      current->trace.y_mm = key.first;
      current->trace.z_mm = key.second;
    }
    current->trace.freqs_MHz.push_back(r[2]);
    current->trace.values.push_back(r[3]);
  }
}

IngestResult finish_ingest(std::vector<ScanRecord> records, double y_step, double z_step) {
  for (const auto& rec : records) {
    try {
      rec.trace.validate();
    } catch (const Error& e) {
      throw Error(rec.source + ": position " + position_text(rec.y_mm, rec.z_mm) + ": " + e.what());
    }
  }
  std::sort(records.begin(), records.end(), [](const ScanRecord& a, const ScanRecord& b) {
    return position_less(a.y_mm, a.z_mm, b.y_mm, b.z_mm);
  });
  IngestResult res;
  std::vector<std::pair<double, double>> pos;
  for (const auto& r : records) pos.emplace_back(r.y_mm, r.z_mm);
  res.grid = grid_report(pos, y_step, z_step);
  res.records = std::move(records);
  if (!res.grid.missing.empty())
    res.warnings.push_back("grid incomplete: " + std::to_string(res.grid.missing.size()) + " of " +
                           std::to_string(res.grid.expected()) + " positions missing");
  if (!res.grid.off_grid.empty())
    res.warnings.push_back(std::to_string(res.grid.off_grid.size()) + " positions are not on the step grid");
  return res;
}

}  // namespace

Region Region::parse(const std::string& text) {
  const auto parts = csv::split(text);
  double v[4];
  if (parts.size() != 4) throw Error("region: expected y_min,y_max,z_min,z_max");
  for (int i = 0; i < 4; ++i)
    if (!csv::parse(parts[static_cast<std::size_t>(i)], v[i])) throw Error("region: non-numeric bound");
  Region r{v[0], v[1], v[2], v[3]};
  if (!(r.y_min <= r.y_max && r.z_min <= r.z_max)) throw Error("region: bounds out of order");
  return r;
}

GridReport grid_report(const std::vector<std::pair<double, double>>& positions, double y_step_mm,
                       double z_step_mm) {
  if (!(y_step_mm > 0.0) || !(z_step_mm > 0.0)) throw Error("grid: steps must be positive");
  GridReport g;
  g.y_step_mm = y_step_mm;
  g.z_step_mm = z_step_mm;
  g.present = positions.size();
  if (positions.empty()) return g;

  double ymin = positions[0].first, ymax = ymin, zmin = positions[0].second, zmax = zmin;
  for (const auto& [y, z] : positions) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
    zmin = std::min(zmin, z);
    zmax = std::max(zmax, z);
  }
  g.y0_mm = ymin;
  g.z0_mm = zmin;
  g.ny = static_cast<std::size_t>(std::llround((ymax - ymin) / y_step_mm)) + 1;
  g.nz = static_cast<std::size_t>(std::llround((zmax - zmin) / z_step_mm)) + 1;

  std::set<std::pair<std::size_t, std::size_t>> occupied;
  for (const auto& [y, z] : positions) {
    const double fy = (y - ymin) / y_step_mm, fz = (z - zmin) / z_step_mm;
    const double ry = std::round(fy), rz = std::round(fz);
    if (std::abs(fy - ry) > 1e-6 || std::abs(fz - rz) > 1e-6) {
      g.off_grid.push_back(position_text(y, z));
      continue;
    }
    occupied.emplace(static_cast<std::size_t>(ry), static_cast<std::size_t>(rz));
  }
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t iz = 0; iz < g.nz; ++iz)
      if (!occupied.count({iy, iz}))
        g.missing.emplace_back(ymin + static_cast<double>(iy) * y_step_mm, zmin + static_cast<double>(iz) * z_step_mm);
  return g;
}

IngestResult ingest(std::istream& in, const std::string& source, double y_step_mm, double z_step_mm) {
  std::vector<ScanRecord> records;
  std::map<std::pair<double, double>, std::string> seen;
  collect_blocks(csv::read_table(in, source, 4), source, records, seen);
  return finish_ingest(std::move(records), y_step_mm, z_step_mm);
}

IngestResult ingest(const std::filesystem::path& path, double y_step_mm, double z_step_mm) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw Error("ingest: " + path.string() + " does not exist");
  }

  std::vector<ScanRecord> records;
  std::map<std::pair<double, double>, std::string> seen;
  for (const auto& f : files) collect_blocks(csv::read_table(f, 4), f.string(), records, seen);
  IngestResult res = finish_ingest(std::move(records), y_step_mm, z_step_mm);
  if (files.empty()) res.warnings.insert(res.warnings.begin(), "ingest: no .csv files in " + path.string());
  else if (res.records.empty()) res.warnings.insert(res.warnings.begin(), "ingest: no data rows in " + path.string());
  return res;
}

void PipelineConfig::validate() const {
  spin.validate();
  inversion.validate();
  if (assignment) assignment->validate();
  if (components < 1 || components > SpectrumModel::kMaxComponents)
    throw Error("pipeline: component count must be 1.." + std::to_string(SpectrumModel::kMaxComponents));
  if (assignment && static_cast<int>(assignment->lines.size()) != components)
    throw Error("pipeline: assignment lists " + std::to_string(assignment->lines.size()) + " lines but " +
                std::to_string(components) + " components are fitted");
  if (!(y_step_mm > 0.0) || !(z_step_mm > 0.0)) throw Error("pipeline: grid steps must be positive");
  if (threads < 0) throw Error("pipeline: thread count must be non-negative");
}

PipelineConfig PipelineConfig::from(const KeyValueConfig& kv) {
  kv.require_known({"spinmodel.d_zfs_MHz", "spinmodel.gamma_MHz_per_mT", "inversion.nominal_mT", "inversion.band",
                    "inversion.theta0_deg", "inversion.phi0_deg", "inversion.multistart",
                    "inversion.seed_spread_deg", "inversion.rng_seed", "inversion.param_tol",
                    "inversion.max_iterations", "inversion.assumed_sigma_MHz", "inversion.use_fit_sigma",
                    "assignment", "spectrum.components", "scan.rotation_zyx_deg", "scan.y_step_mm",
                    "scan.z_step_mm", "stats.region", "pipeline.threads"});
  PipelineConfig c;
  if (auto v = kv.get_double("spinmodel.d_zfs_MHz")) c.spin.d_zfs_MHz = *v;
  if (auto v = kv.get_double("spinmodel.gamma_MHz_per_mT")) c.spin.gamma_MHz_per_mT = *v;
  if (auto v = kv.get_double("inversion.nominal_mT")) c.inversion.nominal_b_mT = *v;
  if (auto v = kv.get_double("inversion.band")) c.inversion.magnitude_band = *v;
  if (auto v = kv.get_double("inversion.theta0_deg")) c.inversion.theta0_deg = *v;
  if (auto v = kv.get_double("inversion.phi0_deg")) c.inversion.phi0_deg = *v;
  if (auto v = kv.get_int("inversion.multistart")) c.inversion.multistart = static_cast<int>(*v);
  if (auto v = kv.get_double("inversion.seed_spread_deg")) c.inversion.seed_spread_deg = *v;
  if (auto v = kv.get_int("inversion.rng_seed")) c.inversion.rng_seed = static_cast<std::uint64_t>(*v);
  if (auto v = kv.get_double("inversion.param_tol")) c.inversion.param_tol = *v;
  if (auto v = kv.get_int("inversion.max_iterations")) c.inversion.max_iterations = static_cast<int>(*v);
  if (auto v = kv.get_double("inversion.assumed_sigma_MHz")) c.inversion.assumed_sigma_MHz = *v;
  if (auto v = kv.get_bool("inversion.use_fit_sigma")) c.use_fit_sigma = *v;
  if (auto v = kv.get_string("assignment"); v && *v != "auto") c.assignment = TransitionAssignment::parse(*v);
  if (auto v = kv.get_int("spectrum.components")) c.components = static_cast<int>(*v);
  if (auto v = kv.get_doubles("scan.rotation_zyx_deg")) {
    if (v->size() != 3) throw Error("scan.rotation_zyx_deg: expected three angles");
    c.inversion.lab_to_crystal = rotation_zyx((*v)[0], (*v)[1], (*v)[2]);
  }
  if (auto v = kv.get_double("scan.y_step_mm")) c.y_step_mm = *v;
  if (auto v = kv.get_double("scan.z_step_mm")) c.z_step_mm = *v;
  if (auto v = kv.get_string("stats.region")) c.central = Region::parse(*v);
  if (auto v = kv.get_int("pipeline.threads")) c.threads = static_cast<int>(*v);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  return from(KeyValueConfig::load(path));
}

std::string_view to_string(PixelStatus s) {
  switch (s) {
    case PixelStatus::Ok: return "ok";
    case PixelStatus::NoFeatures: return "no_features";
    case PixelStatus::FitFailed: return "fit_failed";
    case PixelStatus::InversionFailed: return "inversion_failed";
  }
  return "?";
}

Pixel process_record(const ScanRecord& record, const PipelineConfig& cfg) {
  Pixel px;
  px.y_mm = record.y_mm;
  px.z_mm = record.z_mm;
  px.inversion.field = {kNaN, kNaN, kNaN, false};
  px.inversion.sigma_b = px.inversion.sigma_theta = px.inversion.sigma_phi = kNaN;
  px.inversion.residual_rms_MHz = kNaN;
  px.freqs_MHz.assign(static_cast<std::size_t>(cfg.components), kNaN);
  px.sigma_freqs_MHz.assign(static_cast<std::size_t>(cfg.components), kNaN);
  if (cfg.assignment) px.assignment = *cfg.assignment;

  SpectrumModel guess;
  try {
    guess = initial_guess(record.trace, cfg.components);
  } catch (const Error& e) {
    px.status = PixelStatus::NoFeatures;
    px.detail = e.what();
    return px;
  }

  const SpectrumFit fit = fit_spectrum(record.trace, guess);
  if (!fit.converged) {
    px.status = PixelStatus::FitFailed;
    px.detail = fit.message;
    return px;
  }
  px.fwhm_MHz = fit.model.fwhm_MHz;
  px.fit_residual_rms = fit.residual_rms;
  Measurement m;
  for (int i = 0; i < fit.model.components(); ++i) m.freqs_MHz.push_back(fit.model.lines[static_cast<std::size_t>(i)].center_MHz);
  px.freqs_MHz = m.freqs_MHz;
  px.sigma_freqs_MHz = fit.sigma_center;
  if (cfg.use_fit_sigma) {
    const bool usable = std::all_of(fit.sigma_center.begin(), fit.sigma_center.end(),
                                    [](double s) { return s > 0.0 && std::isfinite(s); });
    if (usable) m.sigma_MHz = fit.sigma_center;
  }

  try {
    px.assignment = cfg.assignment ? *cfg.assignment : nearest_assignment(m.freqs_MHz, cfg.spin, cfg.inversion);
    px.inversion = invert(m, cfg.spin, cfg.inversion, px.assignment);
  } catch (const Error& e) {
    px.status = PixelStatus::InversionFailed;
    px.detail = e.what();
    return px;
  }
  if (px.inversion.model_mismatch) px.detail = "model mismatch";
  else if (px.inversion.at_bound) px.detail = "magnitude at band edge";
  else if (!px.inversion.unique) px.detail = "not unique";
  return px;
}

FieldMap process(const std::vector<ScanRecord>& records, const PipelineConfig& cfg) {
  cfg.validate();
  FieldMap map;
  map.pixels.resize(records.size());

  std::size_t workers = cfg.threads > 0 ? static_cast<std::size_t>(cfg.threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, records.size()));

  // Results land at the record's index, so output order never depends on
  // scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = next++; i < records.size(); i = next++) map.pixels[i] = process_record(records[i], cfg);
    } catch (...) {
      errors[w] = std::current_exception();
      next = records.size();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::sort(map.pixels.begin(), map.pixels.end(),
            [](const Pixel& a, const Pixel& b) { return position_less(a.y_mm, a.z_mm, b.y_mm, b.z_mm); });
  for (std::size_t i = 1; i < map.pixels.size(); ++i)
    if (map.pixels[i].y_mm == map.pixels[i - 1].y_mm && map.pixels[i].z_mm == map.pixels[i - 1].z_mm)
      throw Error("process: duplicate position " + position_text(map.pixels[i].y_mm, map.pixels[i].z_mm));

  std::vector<std::pair<double, double>> pos;
  for (const auto& p : map.pixels) pos.emplace_back(p.y_mm, p.z_mm);
  map.grid = grid_report(pos, cfg.y_step_mm, cfg.z_step_mm);

  if (cfg.assignment) {
    map.assignment = cfg.assignment;
  } else {
    std::optional<TransitionAssignment> common;
    bool same = true;
    for (const auto& p : map.pixels) {
      if (p.status != PixelStatus::Ok) continue;
      if (!common) common = p.assignment;
      else if (!(common->lines == p.assignment.lines)) same = false;
    }
    if (same) map.assignment = common;
    else map.warnings.push_back("transition assignment differs between pixels");
  }

  std::size_t failed = 0;
  for (const auto& p : map.pixels) {
    if (p.status == PixelStatus::Ok) continue;
    ++map.failures[p.status];
    ++failed;
  }
  if (!map.pixels.empty() && 5 * failed > map.pixels.size()) {
    std::string hist;
    for (const auto& [status, n] : map.failures)
      hist += (hist.empty() ? "" : ", ") + std::string(to_string(status)) + "=" + std::to_string(n);
    map.warnings.push_back(std::to_string(failed) + " of " + std::to_string(map.pixels.size()) +
                           " pixels failed (" + hist + ")");
  }
  return map;
}

std::vector<FieldMapRow> field_rows(const FieldMap& map) {
  std::vector<FieldMapRow> rows;
  rows.reserve(map.pixels.size());
  for (const auto& p : map.pixels) {
    FieldMapRow r;
    r.y_mm = p.y_mm;
    r.z_mm = p.z_mm;
    const bool ok = p.status == PixelStatus::Ok;
    const InversionResult& inv = p.inversion;
    r.b_mT = ok ? inv.field.b_m : kNaN;
    r.theta_deg = ok ? inv.field.theta_deg : kNaN;
    r.phi_deg = ok ? inv.field.phi_deg : kNaN;
    r.sigma_b = ok ? inv.sigma_b : kNaN;
    r.sigma_theta = ok ? inv.sigma_theta : kNaN;
    r.sigma_phi = ok ? inv.sigma_phi : kNaN;
    r.residual_MHz = ok ? inv.residual_rms_MHz : kNaN;
    r.unique_flag = ok && inv.unique ? 1 : 0;
    rows.push_back(r);
  }
  return rows;
}

void write_field_map(std::ostream& out, const std::vector<FieldMapRow>& rows) {
  out << kFieldMapHeader << '\n';
  for (const auto& r : rows)
    out << csv::format(r.y_mm) << ',' << csv::format(r.z_mm) << ',' << csv::format(r.b_mT) << ','
        << csv::format(r.theta_deg) << ',' << csv::format(r.phi_deg) << ',' << csv::format(r.sigma_b) << ','
        << csv::format(r.sigma_theta) << ',' << csv::format(r.sigma_phi) << ',' << csv::format(r.residual_MHz)
        << ',' << r.unique_flag << '\n';
}

std::vector<FieldMapRow> read_field_map(std::istream& in, const std::string& source) {
  const csv::Table t = csv::read_table(in, source, 10);
  if (!t.header.empty()) {
    std::string joined;
    for (std::size_t i = 0; i < t.header.size(); ++i) joined += (i ? "," : "") + t.header[i];
    if (joined != kFieldMapHeader) throw Error(source + ": unexpected field-map header '" + joined + "'");
  }
  std::vector<FieldMapRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& v = t.rows[i];
    if (v.size() != 10)
      throw Error(source + ":" + std::to_string(t.line_numbers[i]) + ": expected 10 columns");
    if (v[9] != 0.0 && v[9] != 1.0)
      throw Error(source + ":" + std::to_string(t.line_numbers[i]) + ": unique_flag must be 0 or 1");
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], static_cast<int>(v[9])});
  }
  return rows;
}

std::vector<FieldMapRow> read_field_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_field_map(in, path.string());
}

CentralStats central_stats(const std::vector<FieldMapRow>& rows, const Region& region) {
  std::vector<const FieldMapRow*> sel;
  for (const auto& r : rows)
    if (region.contains(r.y_mm, r.z_mm) && std::isfinite(r.b_mT) && std::isfinite(r.theta_deg) &&
        std::isfinite(r.phi_deg))
      sel.push_back(&r);
  if (sel.empty()) throw Error("central stats: no valid pixels inside the region");

  const auto n = static_cast<double>(sel.size());
  auto estimate = [&](double FieldMapRow::*field) {
    double mean = 0.0;
    for (const auto* r : sel) mean += r->*field;
    mean /= n;
    double ss = 0.0;
    for (const auto* r : sel) ss += (r->*field - mean) * (r->*field - mean);
    Estimate e;
    e.mean = mean;
    e.standard_error = sel.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : kNaN;
    return e;
  };
  CentralStats s;
  s.pixels = sel.size();
  s.b_mT = estimate(&FieldMapRow::b_mT);
  s.theta_deg = estimate(&FieldMapRow::theta_deg);
  s.phi_deg = estimate(&FieldMapRow::phi_deg);
  return s;
}

CentralStats central_stats(const FieldMap& map, const Region& region) {
  return central_stats(field_rows(map), region);
}

RasterScale write_pgm(const std::filesystem::path& path, const std::vector<double>& values, std::size_t width,
                      std::size_t height) {
  if (values.size() != width * height) throw Error("raster: value count does not match dimensions");
  RasterScale sc{kNaN, kNaN};
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    sc.min = std::isnan(sc.min) ? v : std::min(sc.min, v);
    sc.max = std::isnan(sc.max) ? v : std::max(sc.max, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  const double span = sc.max - sc.min;
  for (double v : values) {
    unsigned level = 0;
    if (std::isfinite(v) && span > 0.0) level = static_cast<unsigned>(std::lround((v - sc.min) / span * 65535.0));
    const char bytes[2] = {static_cast<char>((level >> 8) & 0xff), static_cast<char>(level & 0xff)};
    out.write(bytes, 2);
  }
  if (!out) throw Error("write failed: " + path.string());
  return sc;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content,
                std::vector<std::filesystem::path>& written) {
  std::ofstream out(path, std::ios::binary);
  out << content;
  if (!out) throw Error("write failed: " + path.string());
  written.push_back(path);
}

}  // namespace

std::vector<std::filesystem::path> emit(const FieldMap& map, const std::filesystem::path& out_dir,
                                        const EmitOptions& opt) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error("emit: cannot create output directory " + out_dir.string());
  {
    const fs::path probe = out_dir / ".nvmag_write_probe";
    std::ofstream t(probe);
    const bool ok = static_cast<bool>(t);
    t.close();
    fs::remove(probe, ec);
    if (!ok) throw Error("emit: output directory " + out_dir.string() + " is not writable");
  }

  std::size_t lines = 0;
  for (const auto& p : map.pixels) lines = std::max(lines, p.freqs_MHz.size());

  // Render everything first so a formatting failure cannot leave half a map.
  std::vector<std::pair<fs::path, std::string>> files;
  for (std::size_t i = 0; i < lines; ++i) {
    std::string name = "freq_" + std::to_string(i + 1);
    if (map.assignment && i < map.assignment->lines.size())
      name += "_axis" + std::to_string(map.assignment->lines[i].axis) + "_" +
              std::string(to_string(map.assignment->lines[i].kind));
    std::ostringstream s;
    s << "y_mm,z_mm,freq_MHz\n";
    for (const auto& p : map.pixels)
      s << csv::format(p.y_mm) << ',' << csv::format(p.z_mm) << ','
        << csv::format(i < p.freqs_MHz.size() && p.status == PixelStatus::Ok ? p.freqs_MHz[i] : kNaN) << '\n';
    files.emplace_back(out_dir / (name + ".csv"), s.str());
  }
  const std::vector<FieldMapRow> rows = field_rows(map);
  {
    std::ostringstream s;
    write_field_map(s, rows);
    files.emplace_back(out_dir / "field_map.csv", s.str());
  }
  {
    std::ostringstream s;
    s << "y_mm,z_mm,status,assignment,detail\n";
    for (const auto& p : map.pixels) {
      std::string detail = p.detail;
      std::replace(detail.begin(), detail.end(), ',', ';');
      std::replace(detail.begin(), detail.end(), '\n', ' ');
      std::string assign = p.assignment.lines.empty() ? "" : p.assignment.to_string();
      std::replace(assign.begin(), assign.end(), ',', ' ');
      s << csv::format(p.y_mm) << ',' << csv::format(p.z_mm) << ',' << to_string(p.status) << ',' << assign << ','
        << detail << '\n';
    }
    files.emplace_back(out_dir / "pixel_status.csv", s.str());
  }

  std::vector<fs::path> written;
  for (const auto& [path, content] : files) write_file(path, content, written);

  if (opt.raster && map.grid.ny > 0 && map.grid.nz > 0) {
    const GridReport& g = map.grid;
    auto raster = [&](const std::string& name, auto value_of) {
      std::vector<double> img(g.ny * g.nz, kNaN);
      for (std::size_t k = 0; k < map.pixels.size(); ++k) {
        const double fy = (map.pixels[k].y_mm - g.y0_mm) / g.y_step_mm;
        const double fz = (map.pixels[k].z_mm - g.z0_mm) / g.z_step_mm;
        const long iy = std::lround(fy), iz = std::lround(fz);
        if (std::abs(fy - static_cast<double>(iy)) > 1e-6 || std::abs(fz - static_cast<double>(iz)) > 1e-6) continue;
        const std::size_t row = g.nz - 1 - static_cast<std::size_t>(iz);
        img[row * g.ny + static_cast<std::size_t>(iy)] = value_of(k);
      }
      const fs::path pgm = out_dir / (name + ".pgm");
      const RasterScale sc = write_pgm(pgm, img, g.ny, g.nz);
      written.push_back(pgm);
      std::ostringstream s;
      s << "quantity: " << name << "\nmin: " << csv::format(sc.min) << "\nmax: " << csv::format(sc.max)
        << "\nmapping: value = min + (max - min) * level / 65535\nmissing: level 0\nwidth: " << g.ny
        << " (y, ascending)\nheight: " << g.nz << " (z, descending from the first row)\n";
      write_file(out_dir / (name + ".scale.txt"), s.str(), written);
    };
    raster("B_mT", [&](std::size_t k) { return rows[k].b_mT; });
    raster("theta_deg", [&](std::size_t k) { return rows[k].theta_deg; });
    raster("phi_deg", [&](std::size_t k) { return rows[k].phi_deg; });
    for (std::size_t i = 0; i < lines; ++i)
      raster("freq_" + std::to_string(i + 1), [&](std::size_t k) {
        const Pixel& p = map.pixels[k];
        return i < p.freqs_MHz.size() && p.status == PixelStatus::Ok ? p.freqs_MHz[i] : kNaN;
      });
  }
  return written;
}

SphericalField SyntheticScanSpec::field_at(double y_mm, double z_mm) const {
  SphericalField f;
  f.b_m = b0_mT + db_dy * y_mm + db_dz * z_mm;
  f.theta_deg = theta0_deg + dtheta_dy * y_mm + dtheta_dz * z_mm;
  f.phi_deg = phi0_deg + dphi_dy * y_mm + dphi_dz * z_mm;
  return f;
}

SyntheticScan synthesize_scan(const SyntheticScanSpec& spec, const SpinModelParams& p) {
  spec.assignment.validate();
  if (spec.ny == 0 || spec.nz == 0) throw Error("synthetic scan: empty grid");
  SyntheticScan out;
  std::uint64_t index = 0;
  for (std::size_t iy = 0; iy < spec.ny; ++iy) {
    for (std::size_t iz = 0; iz < spec.nz; ++iz, ++index) {
      const double y = spec.y0_mm + static_cast<double>(iy) * spec.y_step_mm;
      const double z = spec.z0_mm + static_cast<double>(iz) * spec.z_step_mm;
      const SphericalField f = spec.field_at(y, z);
      const Prediction pred = predict_frequencies(p, f, spec.assignment);

      SpectrumModel m;
      m.fwhm_MHz = spec.fwhm_MHz;
      const double smax = *std::max_element(pred.strengths.begin(), pred.strengths.end());
      for (std::size_t k = 0; k < pred.freqs_MHz.size(); ++k) {
        const double rel = smax > 0.0 ? pred.strengths[k] / smax : 1.0;
        m.lines.push_back({pred.freqs_MHz[k], spec.amplitude * std::clamp(rel, 0.5, 1.0)});
      }
      const std::vector<double> grid = resonance_windows(pred.freqs_MHz, spec.points, 1.0);
      const double sigma = spec.snr > 0.0 ? spec.amplitude * kDLorentzianPeak / spec.snr : 0.0;

      ScanRecord rec;
      rec.y_mm = y;
      rec.z_mm = z;
      rec.trace = synthesize(m, grid, sigma, spec.seed + index);
      rec.trace.y_mm = y;
      rec.trace.z_mm = z;
      rec.source = "synthetic";
      out.records.push_back(std::move(rec));

      FieldMapRow t;
      t.y_mm = y;
      t.z_mm = z;
      t.b_mT = f.b_m;
      t.theta_deg = f.theta_deg;
      t.phi_deg = f.phi_deg;
      t.unique_flag = 1;
      out.truth.push_back(t);
    }
  }
  return out;
}

void write_scan(std::ostream& out, const std::vector<ScanRecord>& records) {
  out << "y_mm,z_mm,freq_MHz,signal\n";
  for (const auto& r : records) {
    const std::string pos = csv::format(r.y_mm) + "," + csv::format(r.z_mm) + ",";
    for (std::size_t i = 0; i < r.trace.freqs_MHz.size(); ++i)
      out << pos << csv::format(r.trace.freqs_MHz[i]) << ',' << csv::format(r.trace.values[i]) << '\n';
  }
}

}  // namespace nvmag
