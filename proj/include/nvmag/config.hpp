#ifndef NVMAG_CONFIG_HPP
#define NVMAG_CONFIG_HPP

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace nvmag {

// Flat key=value settings with dotted namespaces, e.g.
//
//   # comment
//   spinmodel.d_zfs_MHz = 2870
//   inversion.nominal_mT = 104.5
//
// Keys are case-sensitive. Later assignments override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long long> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  // Comma-separated list of numbers.
  std::optional<std::vector<double>> get_doubles(const std::string& key) const;

  // Throws when a key outside `known` is present, so typos do not pass silently.
  void require_known(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> origin_;  // key -> "file:line"
};

}  // namespace nvmag

#endif  // NVMAG_CONFIG_HPP
