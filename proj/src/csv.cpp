#include "nvmag/csv.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag::csv {

std::string format(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("csv: cannot format number");
  return std::string(buf.data(), ptr);
}

bool parse(std::string_view text, double& out) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& s : out) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

Table read_table(std::istream& in, const std::string& source, std::size_t min_columns) {
  Table t;
  std::string line;
  int lineno = 0;
  bool first_data = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto nb = line.find_first_not_of(" \t");
    if (nb == std::string::npos || line[nb] == '#') continue;
    const auto fields = split(line);
    std::vector<double> row(fields.size());
    bool numeric = fields.size() >= min_columns;
    for (std::size_t i = 0; numeric && i < fields.size(); ++i) numeric = parse(fields[i], row[i]);
    if (!numeric) {
      if (first_data) {
        t.header = fields;
        first_data = false;
        continue;
      }
      throw Error(source + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
    first_data = false;
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(lineno);
  }
  return t;
}

Table read_table(const std::filesystem::path& path, std::size_t min_columns) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_table(in, path.string(), min_columns);
}

SweepTrace read_trace(const std::filesystem::path& path) {
  const Table t = read_table(path, 2);
  SweepTrace tr;
  for (const auto& r : t.rows) {
    tr.freqs_MHz.push_back(r[0]);
    tr.values.push_back(r[1]);
  }
  if (tr.freqs_MHz.empty()) throw Error(path.string() + ": no data rows");
  tr.validate();
  return tr;
}

void write_trace(std::ostream& out, const SweepTrace& trace) {
  out << "freq_MHz,signal\n";
  for (std::size_t i = 0; i < trace.freqs_MHz.size(); ++i)
    out << format(trace.freqs_MHz[i]) << ',' << format(trace.values[i]) << '\n';
}

TimeSeries read_time_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string unit = "V";
  std::string line;
  std::stringstream body;
  while (std::getline(in, line)) {
    const auto pos = line.find("# unit:");
    if (pos != std::string::npos) {
      auto u = split(line.substr(pos + 7), ',');
      if (!u.empty() && !u[0].empty()) unit = u[0];
    }
    body << line << '\n';
  }
  const Table t = read_table(body, path.string(), 2);
  if (t.rows.size() < 2) throw Error(path.string() + ": need at least two samples");
  std::vector<double> dt;
  for (std::size_t i = 1; i < t.rows.size(); ++i) dt.push_back(t.rows[i][0] - t.rows[i - 1][0]);
  std::nth_element(dt.begin(), dt.begin() + static_cast<long>(dt.size() / 2), dt.end());
  const double step = dt[dt.size() / 2];
  if (!(step > 0.0)) throw Error(path.string() + ": time column must increase");
  TimeSeries ts;
  ts.sample_rate_Hz = 1.0 / step;
  ts.unit = unit;
  for (const auto& r : t.rows) ts.samples.push_back(r[1]);
  ts.validate();
  return ts;
}

void write_time_series(std::ostream& out, const TimeSeries& ts) {
  out << "# unit: " << ts.unit << ", time in s\n";
  out << "t_s,value\n";
  for (std::size_t i = 0; i < ts.samples.size(); ++i)
    out << format(static_cast<double>(i) / ts.sample_rate_Hz) << ',' << format(ts.samples[i]) << '\n';
}

void write_asd(std::ostream& out, const ASDResult& asd) {
  out << "# unit: " << asd.unit << "/sqrt(Hz), frequency in Hz; method: " << asd.method << '\n';
  out << "freq_Hz,density\n";
  for (std::size_t k = 0; k < asd.freqs_Hz.size(); ++k)
    out << format(asd.freqs_Hz[k]) << ',' << format(asd.density[k]) << '\n';
}

void write_curves(std::ostream& out, const std::vector<CurvePoint>& points) {
  out << "sweep_value,axis,transition,freq_MHz,strength\n";
  for (const auto& p : points)
    out << format(p.sweep_value) << ',' << p.axis << ',' << to_string(p.kind) << ',' << format(p.freq_MHz) << ','
        << format(p.strength) << '\n';
}

}  // namespace nvmag::csv
