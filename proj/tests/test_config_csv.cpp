#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "nvmag/config.hpp"
#include "nvmag/csv.hpp"
#include "nvmag/error.hpp"

using namespace nvmag;
namespace fs = std::filesystem;

namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nvmag_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("key=value parsing: comments, whitespace, overrides, typed getters") {
  std::istringstream in(
      "# settings\n"
      "  inversion.nominal_mT = 104.5  \n"
      "\n"
      "scan.rotation_zyx_deg = 1, -2.5,3\n"
      "pipeline.threads=4\n"
      "inversion.use_fit_sigma = false\n"
      "assignment = auto\n"
      "pipeline.threads = 2\n");
  const KeyValueConfig c = KeyValueConfig::parse(in, "test.cfg");
  CHECK(*c.get_double("inversion.nominal_mT") == 104.5);
  CHECK(*c.get_int("pipeline.threads") == 2);
  CHECK(*c.get_bool("inversion.use_fit_sigma") == false);
  CHECK(*c.get_string("assignment") == "auto");
  const std::vector<double> rot = *c.get_doubles("scan.rotation_zyx_deg");
  REQUIRE(rot.size() == 3);
  CHECK(rot[1] == -2.5);
  CHECK_FALSE(c.get_double("missing").has_value());
}

TEST_CASE("configuration errors name the source line") {
  std::istringstream no_eq("a = 1\njust a line\n");
  CHECK(error_of([&] { KeyValueConfig::parse(no_eq, "x.cfg"); }).find("x.cfg:2") != std::string::npos);

  std::istringstream typo("inversion.nominal_mT = 1\ninversion.nomnal_mT = 2\n");
  const KeyValueConfig c = KeyValueConfig::parse(typo, "y.cfg");
  const std::string msg = error_of([&] { c.require_known({"inversion.nominal_mT"}); });
  CHECK(msg.find("y.cfg:2") != std::string::npos);
  CHECK(msg.find("inversion.nomnal_mT") != std::string::npos);

  std::istringstream bad("k = 12abc\nb = maybe\n");
  const KeyValueConfig d = KeyValueConfig::parse(bad, "z.cfg");
  CHECK_THROWS_AS(d.get_double("k"), Error);
  CHECK_THROWS_AS(d.get_bool("b"), Error);
  CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/nvmag.cfg"), Error);
}

TEST_CASE("number formatting round-trips exactly") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    double back = 0.0;
    REQUIRE(csv::parse(csv::format(v), back));
    CHECK(back == v);
  }
  CHECK(csv::format(std::nan("")) == "nan");
  double x = 0.0;
  CHECK(csv::parse("nan", x));
  CHECK(std::isnan(x));
  CHECK(csv::parse("+2.5", x));
  CHECK(x == 2.5);
  CHECK_FALSE(csv::parse("2.5x", x));
  CHECK_FALSE(csv::parse("", x));
  CHECK(csv::parse(" 3 ", x));
  CHECK(x == 3.0);
}

TEST_CASE("tables: header detection, comments, malformed rows") {
  std::istringstream in("# produced by hand\nfreq_MHz,signal\n\n4000,0.1\n4001,-0.2\n");
  const csv::Table t = csv::read_table(in, "t.csv", 2);
  CHECK(t.header == std::vector<std::string>{"freq_MHz", "signal"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == -0.2);
  CHECK(t.line_numbers[1] == 5);

  std::istringstream headless("1,2\n3,4\n");
  CHECK(csv::read_table(headless, "h.csv", 2).header.empty());

  std::istringstream broken("freq_MHz,signal\n4000,0.1\n4001,oops\n");
  const std::string msg = error_of([&] { csv::read_table(broken, "b.csv", 2); });
  CHECK(msg.find("b.csv:3") != std::string::npos);

  std::istringstream short_row("1,2\n3\n");
  CHECK(error_of([&] { csv::read_table(short_row, "s.csv", 2); }).find("s.csv:2") != std::string::npos);
}

TEST_CASE("trace and time-series files round-trip") {
  const fs::path dir = temp_dir("csv");
  SweepTrace tr;
  tr.freqs_MHz = {4000.0, 4000.5, 4001.0};
  tr.values = {0.125, -1.0 / 3.0, 2e-17};
  {
    std::ofstream o(dir / "trace.csv");
    csv::write_trace(o, tr);
  }
  const SweepTrace back = csv::read_trace(dir / "trace.csv");
  CHECK(back.freqs_MHz == tr.freqs_MHz);
  CHECK(back.values == tr.values);

  TimeSeries ts{250.0, {1.0, -2.0, 3.5, 0.25, 0.0}, "V"};
  {
    std::ofstream o(dir / "ts.csv");
    csv::write_time_series(o, ts);
  }
  const TimeSeries tb = csv::read_time_series(dir / "ts.csv");
  CHECK(tb.sample_rate_Hz == doctest::Approx(250.0).epsilon(1e-12));
  CHECK(tb.samples == ts.samples);
  CHECK(tb.unit == "V");
  fs::remove_all(dir);
}

TEST_CASE("ASD output declares units and method") {
  ASDResult a;
  a.freqs_Hz = {0.0, 1.0};
  a.density = {1e-9, 2e-9};
  a.unit = "T";
  a.method = "rectangular, no overlap, power average";
  std::ostringstream o;
  csv::write_asd(o, a);
  const std::string s = o.str();
  CHECK(s.rfind("# unit: T/sqrt(Hz)", 0) == 0);
  CHECK(s.find("rectangular") != std::string::npos);
  CHECK(s.find("freq_Hz,density") != std::string::npos);
}
