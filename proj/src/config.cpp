#include "psgd/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace psgd {

namespace {

enum class Kind { Real, RealOrAuto, Int, IntList, RealList, SeedList, Choice, ChoiceList, Bool, Text };

struct KeyDef {
  const char* name;
  const char* fallback;
  Kind kind;
  std::vector<std::string> choices;
};

const std::vector<std::string> kMethodNames{"sgd", "momentum", "adam", "lbfgs", "cg_hessian", "cg_ggn"};

const std::vector<KeyDef>& schema() {
  static const std::vector<KeyDef> defs{
      // diagnostic quadratic
      {"dim", "100", Kind::Int, {}},
      {"lambda_min", "0.01", Kind::Real, {}},
      {"lambda_max", "100", Kind::Real, {}},
      {"sigma", "0.1", Kind::Real, {}},
      {"batch", "1", Kind::Int, {}},
      {"model_seed", "7", Kind::Int, {}},
      // schedule and runs
      {"schedule", "fixed", Kind::Choice, {"fixed", "harmonic"}},
      {"alpha_bar", "auto", Kind::RealOrAuto, {}},
      {"beta", "auto", Kind::RealOrAuto, {}},
      {"gamma", "auto", Kind::RealOrAuto, {}},
      {"seeds", "1..30", Kind::SeedList, {}},
      {"iters", "5000", Kind::Int, {}},
      {"record_every", "50", Kind::Int, {}},
      {"init_std", "0.01", Kind::Real, {}},
      {"tail_fraction", "0.5", Kind::Real, {}},
      // preconditioners
      {"deflate_mode", "top_to_one", Kind::Choice, {"identity", "top_to_one", "top_to_common", "bottom_to_one"}},
      {"deflate_s", "1,5,10,25,50", Kind::IntList, {}},
      {"deflate_v", "1,2,3,5,10", Kind::RealList, {}},
      {"common_s", "20", Kind::Int, {}},
      // basin study
      {"basin_r", "0.5,1,2", Kind::RealList, {}},
      {"basin_alpha", "0.25,0.5,0.9", Kind::RealList, {}},
      {"basin_horizon_cap", "20000", Kind::Int, {}},
      // curvature CG
      {"cg_iters", "5", Kind::Int, {}},
      {"cg_damping", "0.001", Kind::Real, {}},
      {"cg_tol", "1e-10", Kind::Real, {}},
      // Franke regression
      {"phase1_epochs", "500", Kind::Int, {}},
      {"phase2_epochs", "500", Kind::Int, {}},
      {"phase1_lr", "0.001", Kind::Real, {}},
      {"phase1_seeds", "42..46", Kind::SeedList, {}},
      {"phase2_seeds", "43..47", Kind::SeedList, {}},
      {"franke_points", "256", Kind::Int, {}},
      {"franke_noise_var", "0.0001", Kind::Real, {}},
      {"layers", "2,50,50,1", Kind::IntList, {}},
      {"activation", "relu", Kind::Choice, {"relu", "tanh"}},
      {"methods", "sgd,momentum,adam,lbfgs,cg_hessian,cg_ggn", Kind::ChoiceList, kMethodNames},
      {"lbfgs_memory", "100", Kind::Int, {}},
      {"final_window", "10", Kind::Int, {}},
      {"lr_sgd", "0.1", Kind::Real, {}},
      {"lr_momentum", "0.2", Kind::Real, {}},
      {"lr_adam", "0.001", Kind::Real, {}},
      {"lr_lbfgs", "0.02", Kind::Real, {}},
      {"lr_cg_hessian", "1", Kind::Real, {}},
      {"lr_cg_ggn", "1", Kind::Real, {}},
      {"lr_search", "false", Kind::Bool, {}},
      {"lr_search_epochs", "200", Kind::Int, {}},
      {"lr_grid_sgd", "0.5,0.2,0.1,0.05,0.02,0.01,0.005,0.002,0.001,0.0005,0.0002,0.0001", Kind::RealList, {}},
      {"lr_grid_momentum", "0.5,0.2,0.1,0.05,0.02,0.01,0.005,0.002,0.001,0.0005,0.0002,0.0001", Kind::RealList, {}},
      {"lr_grid_adam", "0.001,0.0005,0.0002,0.0001,0.00005,0.00002,0.00001", Kind::RealList, {}},
      {"lr_grid_lbfgs", "1,0.5,0.2,0.1,0.05,0.02,0.01,0.005,0.002,0.001", Kind::RealList, {}},
      {"lr_grid_cg_hessian", "1,0.5,0.2,0.1,0.05,0.02,0.01,0.005,0.002,0.001", Kind::RealList, {}},
      {"lr_grid_cg_ggn", "1,0.5,0.2,0.1,0.05,0.02,0.01,0.005,0.002,0.001,0.0005,0.0002,0.0001", Kind::RealList, {}},
      // output
      {"out_dir", "out", Kind::Text, {}},
      {"jobs", "1", Kind::Int, {}},
  };
  return defs;
}

const KeyDef* find_key(const std::string& key) {
  for (const auto& d : schema())
    if (key == d.name) return &d;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtoull(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

// Integer list with optional inclusive a..b ranges.
template <class T, class Parse>
bool parse_range_list(const std::string& s, std::vector<T>& out, Parse parse) {
  out.clear();
  for (const auto& item : split_list(s)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      T v{};
      if (!parse(item, v)) return false;
      out.push_back(v);
      continue;
    }
    T lo{};
    T hi{};
    if (!parse(trim(item.substr(0, dots)), lo) || !parse(trim(item.substr(dots + 2)), hi) || hi < lo)
      return false;
    for (T v = lo;; ++v) {
      out.push_back(v);
      if (v == hi) break;
    }
  }
  return !out.empty();
}

bool valid_value(const KeyDef& def, const std::string& value, std::string& why) {
  double r = 0.0;
  long i = 0;
  switch (def.kind) {
    case Kind::Real:
      why = "expected a real number";
      return parse_real(value, r);
    case Kind::RealOrAuto:
      why = "expected a real number or 'auto'";
      return value == "auto" || parse_real(value, r);
    case Kind::Int:
      why = "expected an integer";
      return parse_int(value, i);
    case Kind::IntList: {
      why = "expected a comma-separated integer list";
      std::vector<long> v;
      return parse_range_list(value, v, parse_int);
    }
    case Kind::SeedList: {
      why = "expected a comma-separated list of non-negative seeds (ranges a..b allowed)";
      std::vector<std::uint64_t> v;
      return parse_range_list(value, v, parse_u64);
    }
    case Kind::RealList: {
      why = "expected a comma-separated list of reals";
      const auto items = split_list(value);
      if (items.empty()) return false;
      return std::all_of(items.begin(), items.end(), [&](const std::string& s) { return parse_real(s, r); });
    }
    case Kind::Choice:
      why = "expected one of:";
      for (const auto& c : def.choices) why += " " + c;
      return std::find(def.choices.begin(), def.choices.end(), value) != def.choices.end();
    case Kind::ChoiceList: {
      why = "expected a list drawn from:";
      for (const auto& c : def.choices) why += " " + c;
      const auto items = split_list(value);
      if (items.empty()) return false;
      return std::all_of(items.begin(), items.end(), [&](const std::string& s) {
        return std::find(def.choices.begin(), def.choices.end(), s) != def.choices.end();
      });
    }
    case Kind::Bool:
      why = "expected true or false";
      return value == "true" || value == "false";
    case Kind::Text:
      why = "expected a non-empty value";
      return !value.empty();
  }
  return false;
}

}  // namespace

std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

ExperimentConfig::ExperimentConfig() {
  for (const auto& d : schema()) {
    values_[d.name] = d.fallback;
    lines_[d.name] = -1;
  }
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& d : schema()) out.emplace_back(d.name);
    return out;
  }();
  return names;
}

void ExperimentConfig::assign(const std::string& key, const std::string& value, int line,
                              const std::string& source) {
  const std::string where = source + ":" + std::to_string(line) + ": ";
  const KeyDef* def = find_key(key);
  if (!def) throw ConfigError(where + "unknown key '" + key + "'");
  if (line > 0 && lines_[key] > 0) {
    throw ConfigError(where + "key '" + key + "' already set on line " + std::to_string(lines_[key]));
  }
  std::string why;
  if (!valid_value(*def, value, why))
    throw ConfigError(where + "bad value '" + value + "' for key '" + key + "': " + why);
  values_[key] = value;
  lines_[key] = line;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value', got '" + text + "'");
    cfg.assign(trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line, source);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse(in, path);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  assign(key, value, 0, "<override>");
}

bool ExperimentConfig::is_auto(const std::string& key) const { return get_string(key) == "auto"; }

std::string ExperimentConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_real(get_string(key), v)) throw ConfigError("key '" + key + "' is not a real number");
  return v;
}

long ExperimentConfig::get_long(const std::string& key) const {
  long v = 0;
  if (!parse_int(get_string(key), v)) throw ConfigError("key '" + key + "' is not an integer");
  return v;
}

bool ExperimentConfig::get_bool(const std::string& key) const { return get_string(key) == "true"; }

std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get_string(key))) {
    double v = 0.0;
    if (!parse_real(item, v)) throw ConfigError("key '" + key + "' is not a list of reals");
    out.push_back(v);
  }
  return out;
}

std::vector<long> ExperimentConfig::get_longs(const std::string& key) const {
  std::vector<long> out;
  if (!parse_range_list(get_string(key), out, parse_int))
    throw ConfigError("key '" + key + "' is not an integer list");
  return out;
}

std::vector<std::uint64_t> ExperimentConfig::get_seeds(const std::string& key) const {
  std::vector<std::uint64_t> out;
  if (!parse_range_list(get_string(key), out, parse_u64))
    throw ConfigError("key '" + key + "' is not a seed list");
  return out;
}

void ExperimentConfig::write(std::ostream& out, const std::map<std::string, std::string>& resolved) const {
  for (const auto& d : schema()) {
    const auto it = resolved.find(d.name);
    if (it != resolved.end()) {
      out << d.name << " = " << it->second << "  # " << values_.at(d.name) << "\n";
    } else {
      out << d.name << " = " << values_.at(d.name) << "\n";
    }
  }
}

}  // namespace psgd
