#ifndef NVMAG_CSV_HPP
#define NVMAG_CSV_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "nvmag/noise.hpp"
#include "nvmag/spectrum.hpp"
#include "nvmag/spinmodel.hpp"

namespace nvmag::csv {

// Shortest text that parses back to the same double. NaN prints as "nan".
std::string format(double v);

// Strict full-field parse; accepts "nan", "inf", a leading '+'.
bool parse(std::string_view text, double& out);

std::vector<std::string> split(std::string_view line, char sep = ',');

// Rows of numeric fields from a text stream. Blank lines and lines starting
// with '#' are skipped; a first row that is not numeric is taken as a header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;  // source line of each row
};
Table read_table(std::istream& in, const std::string& source, std::size_t min_columns);
Table read_table(const std::filesystem::path& path, std::size_t min_columns);

// Trace file: freq_MHz, signal.
SweepTrace read_trace(const std::filesystem::path& path);
void write_trace(std::ostream& out, const SweepTrace& trace);

// Time series: t_s, value. The sample rate comes from the median time step;
// a "# unit: X" comment sets the unit.
TimeSeries read_time_series(const std::filesystem::path& path);
void write_time_series(std::ostream& out, const TimeSeries& ts);

void write_asd(std::ostream& out, const ASDResult& asd);

// sweep_value, axis, transition, freq_MHz, strength
void write_curves(std::ostream& out, const std::vector<CurvePoint>& points);

}  // namespace nvmag::csv

#endif  // NVMAG_CSV_HPP
