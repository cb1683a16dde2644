#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace psgd {

/// Line-oriented `key = value` experiment configuration.
///
/// Every key has a default; a file only lists what it changes. `#` starts a
/// comment, lists are comma separated, and integer lists accept `a..b`
/// ranges. Unknown or repeated keys and malformed values raise ConfigError
/// naming the key and line.
class ExperimentConfig {
 public:
  ExperimentConfig();

  static ExperimentConfig parse(std::istream& in, const std::string& source = "<config>");
  static ExperimentConfig load(const std::string& path);

  /// Override one key (line 0 in error messages).
  void set(const std::string& key, const std::string& value);

  bool is_auto(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  long get_long(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<long> get_longs(const std::string& key) const;
  std::vector<std::uint64_t> get_seeds(const std::string& key) const;

  /// Resolved values (defaults included) in schema order. `resolved` maps
  /// keys whose value was derived at run time (e.g. `auto`) to what was
  /// used; those are written as `key = value  # auto`.
  void write(std::ostream& out, const std::map<std::string, std::string>& resolved = {}) const;

  static const std::vector<std::string>& keys();

 private:
  void assign(const std::string& key, const std::string& value, int line, const std::string& source);

  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the same double.
std::string format_real(double x);

}  // namespace psgd
