#ifndef NVMAG_SCANPIPE_HPP
#define NVMAG_SCANPIPE_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nvmag/config.hpp"
#include "nvmag/inversion.hpp"
#include "nvmag/spectrum.hpp"
#include "nvmag/spinmodel.hpp"

namespace nvmag {

struct ScanRecord {
  double y_mm = 0.0;
  double z_mm = 0.0;
  SweepTrace trace;
  std::string source;  // "file:line" of the first row
};

// Axis-aligned rectangle in scan coordinates, bounds inclusive.
struct Region {
  double y_min = 0.0, y_max = 0.0;
  double z_min = 0.0, z_max = 0.0;

  bool contains(double y, double z) const { return y >= y_min && y <= y_max && z >= z_min && z <= z_max; }
  static Region parse(const std::string& text);  // "y_min,y_max,z_min,z_max"
};

struct GridReport {
  double y_step_mm = 1.5;
  double z_step_mm = 1.0;
  std::size_t ny = 0, nz = 0;
  double y0_mm = 0.0, z0_mm = 0.0;  // lower-left grid node
  std::size_t present = 0;
  std::vector<std::pair<double, double>> missing;  // (y, z) of absent nodes
  std::vector<std::string> off_grid;               // positions not on a step multiple

  std::size_t expected() const { return ny * nz; }
  bool complete() const { return missing.empty() && off_grid.empty(); }
};

// Grid spanned by the positions at the given steps.
GridReport grid_report(const std::vector<std::pair<double, double>>& positions, double y_step_mm,
                       double z_step_mm);

struct IngestResult {
  std::vector<ScanRecord> records;  // sorted by (y, z)
  GridReport grid;
  std::vector<std::string> warnings;
};

// Long-format scan data with columns y_mm, z_mm, freq_MHz, signal. `path`
// may be a file or a directory of *.csv files. Rows of one position form one
// trace; a position repeated in another file or in a separate block is an
// error naming both sources.
IngestResult ingest(const std::filesystem::path& path, double y_step_mm = 1.5, double z_step_mm = 1.0);
IngestResult ingest(std::istream& in, const std::string& source, double y_step_mm = 1.5, double z_step_mm = 1.0);

struct PipelineConfig {
  SpinModelParams spin;
  InversionConfig inversion;
  std::optional<TransitionAssignment> assignment;  // empty: nearest-predicted matching per pixel
  int components = 4;
  double y_step_mm = 1.5;
  double z_step_mm = 1.0;
  std::optional<Region> central;
  int threads = 0;  // 0: hardware concurrency
  bool use_fit_sigma = true;  // weight the inversion by fitted center uncertainties

  void validate() const;
  static PipelineConfig from(const KeyValueConfig& kv);
  static PipelineConfig load(const std::filesystem::path& path);
};

enum class PixelStatus { Ok, NoFeatures, FitFailed, InversionFailed };
std::string_view to_string(PixelStatus s);

struct Pixel {
  double y_mm = 0.0;
  double z_mm = 0.0;
  PixelStatus status = PixelStatus::Ok;
  std::string detail;
  std::vector<double> freqs_MHz;  // fitted centers in assignment order, NaN on failure
  std::vector<double> sigma_freqs_MHz;
  double fwhm_MHz = std::numeric_limits<double>::quiet_NaN();
  double fit_residual_rms = std::numeric_limits<double>::quiet_NaN();
  TransitionAssignment assignment;
  InversionResult inversion;  // field is NaN unless status is Ok
};

struct FieldMap {
  std::vector<Pixel> pixels;  // sorted by (y, z)
  GridReport grid;
  std::optional<TransitionAssignment> assignment;  // common to all pixels, when there is one
  std::map<PixelStatus, std::size_t> failures;
  std::vector<std::string> warnings;
};

FieldMap process(const std::vector<ScanRecord>& records, const PipelineConfig& cfg);

// One pixel, with no shared state. process() is a parallel map of this.
Pixel process_record(const ScanRecord& record, const PipelineConfig& cfg);

// One row of the field-map CSV.
struct FieldMapRow {
  double y_mm = 0.0, z_mm = 0.0;
  double b_mT = 0.0, theta_deg = 0.0, phi_deg = 0.0;
  double sigma_b = 0.0, sigma_theta = 0.0, sigma_phi = 0.0;
  double residual_MHz = 0.0;
  int unique_flag = 0;
};

std::vector<FieldMapRow> field_rows(const FieldMap& map);

inline constexpr const char* kFieldMapHeader =
    "y_mm,z_mm,B_mT,theta_deg,phi_deg,sigma_B,sigma_theta,sigma_phi,residual_MHz,unique_flag";

void write_field_map(std::ostream& out, const std::vector<FieldMapRow>& rows);
std::vector<FieldMapRow> read_field_map(const std::filesystem::path& path);
std::vector<FieldMapRow> read_field_map(std::istream& in, const std::string& source);

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct CentralStats {
  std::size_t pixels = 0;  // finite pixels inside the region
  Estimate b_mT, theta_deg, phi_deg;
};

// Unweighted means and std/sqrt(n) over finite pixels inside the region.
// Throws nvmag::Error when no pixel qualifies.
CentralStats central_stats(const std::vector<FieldMapRow>& rows, const Region& region);
CentralStats central_stats(const FieldMap& map, const Region& region);

struct EmitOptions {
  bool raster = false;
};

// Writes the per-line frequency maps, field_map.csv and pixel_status.csv, and
// optionally 16-bit PGM rasters with .scale.txt sidecars. The destination is
// checked before anything is written. Returns the files written.
std::vector<std::filesystem::path> emit(const FieldMap& map, const std::filesystem::path& out_dir,
                                        const EmitOptions& opt = {});

// Binary 16-bit PGM of a ny x nz grid (NaN -> 0), min-max scaled. Rows run
// from the largest z down; columns follow y.
struct RasterScale {
  double min = 0.0;
  double max = 0.0;
};
RasterScale write_pgm(const std::filesystem::path& path, const std::vector<double>& values, std::size_t width,
                      std::size_t height);

// Forward-modeled scan of a Halbach-like field with mild linear gradients.
struct SyntheticScanSpec {
  std::size_t ny = 21, nz = 21;
  double y0_mm = -15.0, z0_mm = -10.0;
  double y_step_mm = 1.5, z_step_mm = 1.0;
  double b0_mT = 104.5;
  double theta0_deg = 35.46;
  double phi0_deg = -2.43;
  double db_dy = 0.02, db_dz = -0.015;          // mT per mm
  double dtheta_dy = 0.01, dtheta_dz = 0.005;   // deg per mm
  double dphi_dy = -0.005, dphi_dz = 0.01;      // deg per mm
  double fwhm_MHz = 11.48;
  double amplitude = 1.0;  // derivative-Lorentzian prefactor of the strongest line
  double snr = 20.0;       // extremum height over noise sigma; <= 0 for noiseless
  std::uint64_t seed = 1;
  std::size_t points = 164;
  TransitionAssignment assignment = TransitionAssignment::halbach_default();

  SphericalField field_at(double y_mm, double z_mm) const;
};

struct SyntheticScan {
  std::vector<ScanRecord> records;
  std::vector<FieldMapRow> truth;  // generating field, sigmas zero
};

SyntheticScan synthesize_scan(const SyntheticScanSpec& spec, const SpinModelParams& p = {});

// Long-format CSV of records (y_mm, z_mm, freq_MHz, signal).
void write_scan(std::ostream& out, const std::vector<ScanRecord>& records);

}  // namespace nvmag

#endif  // NVMAG_SCANPIPE_HPP
