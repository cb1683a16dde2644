#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "psgd/experiments.hpp"

using namespace psgd;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("psgd_unit_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig small(const fs::path& out) {
  ExperimentConfig c;
  c.set("dim", "12");
  c.set("iters", "200");
  c.set("record_every", "20");
  c.set("seeds", "1..4");
  c.set("deflate_s", "1,3");
  c.set("deflate_v", "1,2");
  c.set("common_s", "3");
  c.set("out_dir", out.string());
  return c;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST_CASE("quad-sweep output layout") {
  const fs::path dir = scratch("sweep");
  const auto files = cmd_quad_sweep(small(dir));
  for (const char* meta : {"build_id.txt", "config.resolved.txt", "seeds.txt", "manifest.txt"})
    CHECK(fs::exists(dir / meta));
  for (const char* panel : {"top_to_one", "top_to_common", "bottom_to_one"}) {
    CHECK(fs::exists(dir / panel / "identity.csv"));
    const auto rows = lines(dir / panel / "identity.csv");
    CHECK(rows.front() == "k,mean_gap,std_gap,bound,oracle");
    CHECK(rows.size() == 200 / 20 + 1 + 1);
  }
  CHECK(fs::exists(dir / "top_to_one" / "s3.csv"));
  CHECK(fs::exists(dir / "top_to_common" / "v2.csv"));
  CHECK(lines(dir / "top_to_one" / "identity.csv") == lines(dir / "bottom_to_one" / "identity.csv"));

  const auto constants = lines(dir / "constants.csv");
  const auto full = split(constants.back());
  CHECK(full[0] == "reference");
  CHECK(std::stod(full[2]) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::stod(full[3]) == doctest::Approx(1.0).epsilon(1e-12));

  const auto manifest = lines(dir / "manifest.txt");
  CHECK(manifest.front() == "command = quad-sweep");
  CHECK(std::find(files.begin(), files.end(), "top_to_common/v1.csv") != files.end());
}

TEST_CASE("bounds output") {
  const fs::path dir = scratch("bounds");
  ExperimentConfig c = small(dir);
  c.set("deflate_mode", "top_to_one");
  cmd_bounds(c);
  const auto rows = lines(dir / "bounds.csv");
  CHECK(rows.size() == 12);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    REQUIRE(f.size() == 5);
    CHECK(!f[3].empty());
    CHECK(!f[4].empty());
  }

  const fs::path hdir = scratch("bounds_h");
  ExperimentConfig h = small(hdir);
  h.set("schedule", "harmonic");
  h.set("lambda_min", "1");
  h.set("lambda_max", "10");
  cmd_bounds(h);
  const auto cfg_lines = lines(hdir / "config.resolved.txt");
  CHECK(std::find(cfg_lines.begin(), cfg_lines.end(), "beta = 2  # auto") != cfg_lines.end());

  ExperimentConfig bad = small(scratch("bounds_bad"));
  bad.set("alpha_bar", "10");
  try {
    cmd_bounds(bad);
    FAIL("expected rejection");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("mu/(L_hat K_G)") != std::string::npos);
  }
}

TEST_CASE("basin output with zero noise") {
  const fs::path dir = scratch("basin");
  ExperimentConfig c;
  c.set("dim", "6");
  c.set("lambda_min", "1");
  c.set("lambda_max", "10");
  c.set("sigma", "0");
  c.set("init_std", "0.1");
  c.set("seeds", "1..20");
  c.set("deflate_mode", "identity");
  c.set("basin_horizon_cap", "500");
  c.set("out_dir", dir.string());
  cmd_basin(c);
  const auto rows = lines(dir / "basin.csv");
  CHECK(rows.front() == "r,alpha,stay_fraction,bound");
  CHECK(rows.size() == 10);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::stod(split(rows[i])[2]) == 1.0);
}

TEST_CASE("franke output lists every method") {
  const fs::path dir = scratch("franke");
  ExperimentConfig c;
  c.set("phase1_epochs", "5");
  c.set("phase2_epochs", "5");
  c.set("phase1_seeds", "42,43");
  c.set("phase2_seeds", "43,44");
  c.set("layers", "2,4,1");
  c.set("franke_points", "16");
  c.set("out_dir", dir.string());
  cmd_franke(c);
  const auto manifest = lines(dir / "manifest.txt");
  for (const char* m : {"sgd", "momentum", "adam", "lbfgs", "cg_hessian", "cg_ggn"}) {
    CHECK(std::find(manifest.begin(), manifest.end(), std::string("method = ") + m) != manifest.end());
    CHECK(lines(dir / (std::string(m) + "_loss.csv")).size() == 11);
    CHECK(fs::exists(dir / (std::string(m) + "_time.csv")));
  }
  CHECK(std::find(manifest.begin(), manifest.end(), "phase_boundary_epoch = 5") != manifest.end());
  CHECK(lines(dir / "seeds.txt").front() == "phase1: 42 43");
}
