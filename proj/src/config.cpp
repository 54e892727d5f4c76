#include "nvmag/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "nvmag/error.hpp"

namespace nvmag {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_number(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(source + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[key] = value;
    cfg.origin_[key] = source + ":" + std::to_string(lineno);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  return parse(in, path.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
  origin_[key] = "<override>";
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  double v = 0.0;
  if (!parse_number(*s, v)) throw Error(origin_.at(key) + ": " + key + " is not a number: '" + *s + "'");
  return v;
}

std::optional<long long> KeyValueConfig::get_int(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
  if (ec != std::errc() || ptr != s->data() + s->size())
    throw Error(origin_.at(key) + ": " + key + " is not an integer: '" + *s + "'");
  return v;
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  if (*s == "true" || *s == "1" || *s == "yes" || *s == "on") return true;
  if (*s == "false" || *s == "0" || *s == "no" || *s == "off") return false;
  throw Error(origin_.at(key) + ": " + key + " is not a boolean: '" + *s + "'");
}

std::optional<std::vector<double>> KeyValueConfig::get_doubles(const std::string& key) const {
  const auto s = get_string(key);
  if (!s) return std::nullopt;
  std::vector<double> out;
  std::stringstream ss(*s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_number(trim(item), v))
      throw Error(origin_.at(key) + ": " + key + " has a non-numeric entry '" + trim(item) + "'");
    out.push_back(v);
  }
  return out;
}

void KeyValueConfig::require_known(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_)
    if (!known.count(key)) throw Error(origin_.at(key) + ": unknown key '" + key + "'");
}

}  // namespace nvmag
