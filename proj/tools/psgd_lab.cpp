// Command-line driver for the preconditioned-SGD experiments.
//
//   psgd_lab <quad-sweep|bounds|basin|franke> --config <path> [--out <dir>] [--jobs N]

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "psgd/config.hpp"
#include "psgd/experiments.hpp"

namespace {

int run(const std::string& command, const std::string& config_path, const std::string& out_dir, int jobs) {
  psgd::ExperimentConfig cfg = psgd::ExperimentConfig::load(config_path);
  if (!out_dir.empty()) cfg.set("out_dir", out_dir);
  if (jobs > 0) cfg.set("jobs", std::to_string(jobs));

  std::vector<std::string> files;
  if (command == "quad-sweep") {
    files = psgd::cmd_quad_sweep(cfg);
  } else if (command == "bounds") {
    files = psgd::cmd_bounds(cfg);
  } else if (command == "basin") {
    files = psgd::cmd_basin(cfg);
  } else {
    files = psgd::cmd_franke(cfg);
  }
  std::cout << command << ": wrote " << files.size() << " files to " << cfg.get_string("out_dir") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preconditioned SGD laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int jobs = 0;
  for (const char* name : {"quad-sweep", "bounds", "basin", "franke"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "key = value configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
    sub->add_option("--jobs", jobs, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, config_path, out_dir, jobs);
  } catch (const psgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const psgd::InputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const psgd::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const psgd::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
