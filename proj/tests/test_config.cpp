#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "psgd/config.hpp"

using namespace psgd;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return ExperimentConfig::parse(in, "test.cfg");
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults and parsing") {
  const ExperimentConfig def;
  CHECK(def.get_long("dim") == 100);
  CHECK(def.is_auto("alpha_bar"));
  CHECK(def.get_seeds("phase1_seeds") == std::vector<std::uint64_t>{42, 43, 44, 45, 46});
  CHECK(def.get_seeds("phase2_seeds") == std::vector<std::uint64_t>{43, 44, 45, 46, 47});
  CHECK(def.get_longs("deflate_s") == std::vector<long>{1, 5, 10, 25, 50});
  CHECK(def.get_doubles("deflate_v") == std::vector<double>{1, 2, 3, 5, 10});
  CHECK(def.get_long("phase1_epochs") == 500);
  CHECK(def.get_longs("layers") == std::vector<long>{2, 50, 50, 1});
  CHECK(def.get_seeds("seeds").size() == 30);

  const ExperimentConfig c = parse(
      "# comment line\n"
      "\n"
      "dim = 20   # trailing comment\n"
      "alpha_bar=0.25\n"
      "  seeds = 1..3, 10\n"
      "deflate_v = 1.5, 2\n"
      "schedule = harmonic\n"
      "lr_search = true\n");
  CHECK(c.get_long("dim") == 20);
  CHECK_FALSE(c.is_auto("alpha_bar"));
  CHECK(c.get_double("alpha_bar") == 0.25);
  CHECK(c.get_seeds("seeds") == std::vector<std::uint64_t>{1, 2, 3, 10});
  CHECK(c.get_doubles("deflate_v") == std::vector<double>{1.5, 2.0});
  CHECK(c.get_string("schedule") == "harmonic");
  CHECK(c.get_bool("lr_search"));
}

TEST_CASE("errors name the key and line") {
  const std::string unknown = error_of("dim = 10\nalpha = 0.1\n");
  CHECK(unknown.find("test.cfg:2") != std::string::npos);
  CHECK(unknown.find("alpha") != std::string::npos);

  const std::string dup = error_of("dim = 10\n\ndim = 12\n");
  CHECK(dup.find("test.cfg:3") != std::string::npos);
  CHECK(dup.find("line 1") != std::string::npos);

  const std::string bad = error_of("sigma = 0.1\niters = many\n");
  CHECK(bad.find("test.cfg:2") != std::string::npos);
  CHECK(bad.find("iters") != std::string::npos);

  CHECK(error_of("schedule = cosine\n").find("schedule") != std::string::npos);
  CHECK(error_of("methods = sgd, newton\n").find("methods") != std::string::npos);
  CHECK(error_of("seeds = 5..2\n").find("seeds") != std::string::npos);
  CHECK(error_of("seeds = -1\n").find("seeds") != std::string::npos);
  CHECK(error_of("sigma = nan\n").find("sigma") != std::string::npos);
  CHECK(error_of("just text\n").find("test.cfg:1") != std::string::npos);
  CHECK(error_of("dim = 10\n").empty());

  ExperimentConfig c;
  CHECK_THROWS_AS(c.set("nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("jobs", "two"), ConfigError);
  c.set("jobs", "4");
  CHECK(c.get_long("jobs") == 4);
  CHECK_THROWS_AS(ExperimentConfig::load("/nonexistent/config.cfg"), ConfigError);
}

TEST_CASE("resolved configuration lists every key") {
  ExperimentConfig c = parse("dim = 12\n");
  std::ostringstream out;
  c.write(out, {{"alpha_bar", "0.005"}});
  const std::string text = out.str();
  for (const auto& key : ExperimentConfig::keys()) CHECK(text.find(key + " = ") != std::string::npos);
  CHECK(text.find("dim = 12\n") != std::string::npos);
  CHECK(text.find("alpha_bar = 0.005  # auto\n") != std::string::npos);

  // The resolved file parses back, comments and all.
  std::istringstream in(text);
  const ExperimentConfig back = ExperimentConfig::parse(in, "resolved");
  CHECK(back.get_double("alpha_bar") == 0.005);
  CHECK(back.get_long("dim") == 12);
}

TEST_CASE("shortest round-trip formatting") {
  CHECK(format_real(0.1) == "0.1");
  CHECK(format_real(0.25) == "0.25");
  CHECK(format_real(200.0) == "200");
  for (double x : {1.0 / 3.0, 2.0 / 7.0, 1e-300, 123456.789, std::sqrt(2.0)})
    CHECK(std::stod(format_real(x)) == x);
}
