#pragma once

#include <memory>
#include <string>
#include <vector>

#include "psgd/config.hpp"
#include "psgd/engine.hpp"
#include "psgd/precond.hpp"
#include "psgd/quadratic.hpp"
#include "psgd/theory.hpp"

namespace psgd {

/// Identifier of the build that produced an output directory.
const char* build_id();

/// Shortest round-trip text is used for config echoes; result tables use
/// 17 significant digits.
std::string format17(double x);

/// CSV with header `k,mean_gap,std_gap,bound,oracle`. bound and oracle are
/// optional; when empty, the column is written as an empty string.
void write_result_table(const std::string& path, const std::vector<long>& ks, const std::vector<double>& mean,
                        const std::vector<double>& std, const std::vector<double>& bound = {},
                        const std::vector<double>& oracle = {});

QuadraticModel model_from_config(const ExperimentConfig& cfg);

/// alpha_bar, or 0.5 / lambda_max(H) when set to auto.
double resolve_alpha(const ExperimentConfig& cfg, const QuadraticModel& model);

struct HarmonicParams {
  double beta = 0.0;
  double gamma = 0.0;
};

/// beta defaults to 2/(c_hat mu); gamma defaults to beta L_hat K_G / mu - 1
/// so that alpha_1 sits exactly at mu / (L_hat K_G).
HarmonicParams resolve_harmonic(const ExperimentConfig& cfg, const TheoryConstants& c);

/// "identity", "top_to_one", "top_to_common" or "bottom_to_one".
std::unique_ptr<Preconditioner> make_preconditioner(const QuadraticModel& model, const std::string& mode, int s,
                                                    double v);

/// Per-seed mean over the recorded points in the last `tail_fraction` of a
/// trajectory.
std::vector<double> tail_means(const Trajectory& t, double tail_fraction);

double median(std::vector<double> xs);

/// Subcommands. Each writes into cfg `out_dir` (created if needed) and
/// returns the files it wrote, relative to that directory.
std::vector<std::string> cmd_quad_sweep(const ExperimentConfig& cfg);
std::vector<std::string> cmd_bounds(const ExperimentConfig& cfg);
std::vector<std::string> cmd_basin(const ExperimentConfig& cfg);
std::vector<std::string> cmd_franke(const ExperimentConfig& cfg);

}  // namespace psgd
