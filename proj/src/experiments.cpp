#include "psgd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "psgd/nn.hpp"

#ifndef PSGD_BUILD_ID
#define PSGD_BUILD_ID "unknown"
#endif

namespace psgd {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

// Bookkeeping shared by every subcommand: metadata files and the manifest.
class OutputDir {
 public:
  OutputDir(const ExperimentConfig& cfg, std::string command)
      : root_(cfg.get_string("out_dir")), command_(std::move(command)) {
    fs::create_directories(root_);
    std::ofstream(root_ / "build_id.txt", std::ios::binary) << build_id() << "\n";
    files_.push_back("build_id.txt");
  }

  fs::path path(const std::string& rel) {
    files_.push_back(rel);
    return root_ / rel;
  }

  void write_config(const ExperimentConfig& cfg, const std::map<std::string, std::string>& resolved) {
    auto out = open_out(path("config.resolved.txt"));
    out << "# " << command_ << "\n";
    cfg.write(out, resolved);
  }

  void write_seeds(const std::vector<std::pair<std::string, std::vector<std::uint64_t>>>& lists) {
    auto out = open_out(path("seeds.txt"));
    for (const auto& [name, seeds] : lists) {
      out << name << ":";
      for (auto s : seeds) out << " " << s;
      out << "\n";
    }
  }

  void note(const std::string& key, const std::string& value) { notes_.emplace_back(key, value); }

  std::vector<std::string> finish() {
    files_.push_back("manifest.txt");
    std::ofstream out(root_ / "manifest.txt", std::ios::binary);
    out << "command = " << command_ << "\n";
    for (const auto& [k, v] : notes_) out << k << " = " << v << "\n";
    for (const auto& f : files_) out << "file = " << f << "\n";
    return files_;
  }

 private:
  fs::path root_;
  std::string command_;
  std::vector<std::string> files_;
  std::vector<std::pair<std::string, std::string>> notes_;
};

RunConfig run_config(const ExperimentConfig& cfg, const Schedule& schedule) {
  RunConfig rc;
  rc.iters = cfg.get_long("iters");
  rc.seeds = cfg.get_seeds("seeds");
  rc.schedule = schedule;
  rc.record_every = cfg.get_long("record_every");
  rc.init_std = cfg.get_double("init_std");
  rc.jobs = static_cast<int>(cfg.get_long("jobs"));
  rc.validate();
  return rc;
}

std::vector<double> column(const Trajectory& t, std::size_t j_seed_free) {
  std::vector<double> out;
  out.reserve(t.num_seeds());
  for (const auto& row : t.per_seed) out.push_back(row[j_seed_free]);
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

std::vector<double> fixed_bound_column(const TheoryConstants& c, double alpha, double mean_gap1,
                                       const std::vector<long>& ks) {
  // The envelope is affine in the initial gap, so its seed average is the
  // envelope of the mean initial gap.
  std::vector<double> out;
  try {
    const FixedRateBound b = fixed_rate_bound(c, alpha, mean_gap1);
    for (long k : ks) out.push_back(b.at(k));
  } catch (const InputError&) {
    out.clear();
  }
  return out;
}

CgConfig cg_from(const ExperimentConfig& cfg) {
  CgConfig cg;
  cg.max_iters = static_cast<int>(cfg.get_long("cg_iters"));
  cg.damping = cfg.get_double("cg_damping");
  cg.tol = cfg.get_double("cg_tol");
  cg.validate();
  return cg;
}

std::vector<int> layer_dims(const ExperimentConfig& cfg) {
  std::vector<int> dims;
  for (long d : cfg.get_longs("layers")) dims.push_back(static_cast<int>(d));
  return dims;
}

double final_loss(const std::vector<double>& per_epoch, long window) {
  const std::size_t n = per_epoch.size();
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1L, window)));
  double s = 0.0;
  for (std::size_t i = n - w; i < n; ++i) s += per_epoch[i];
  return s / static_cast<double>(w);
}

}  // namespace

const char* build_id() { return PSGD_BUILD_ID; }

std::string format17(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void write_result_table(const std::string& path, const std::vector<long>& ks, const std::vector<double>& mean,
                        const std::vector<double>& std, const std::vector<double>& bound,
                        const std::vector<double>& oracle) {
  const std::size_t n = ks.size();
  if (mean.size() != n || std.size() != n || (!bound.empty() && bound.size() != n) ||
      (!oracle.empty() && oracle.size() != n)) {
    throw InputError("result table: column lengths disagree");
  }
  auto out = open_out(path);
  out << "k,mean_gap,std_gap,bound,oracle\n";
  for (std::size_t j = 0; j < n; ++j) {
    out << ks[j] << ',' << format17(mean[j]) << ',' << format17(std[j]) << ',';
    if (!bound.empty()) out << format17(bound[j]);
    out << ',';
    if (!oracle.empty()) out << format17(oracle[j]);
    out << '\n';
  }
}

QuadraticModel model_from_config(const ExperimentConfig& cfg) {
  const long d = cfg.get_long("dim");
  const long batch = cfg.get_long("batch");
  const long seed = cfg.get_long("model_seed");
  if (seed < 0) throw ConfigError("model_seed must be >= 0");
  return make_diagnostic_model(d, cfg.get_double("lambda_min"), cfg.get_double("lambda_max"),
                               static_cast<std::uint64_t>(seed), cfg.get_double("sigma"),
                               static_cast<int>(batch));
}

double resolve_alpha(const ExperimentConfig& cfg, const QuadraticModel& model) {
  return cfg.is_auto("alpha_bar") ? 0.5 / model.lambda_max() : cfg.get_double("alpha_bar");
}

HarmonicParams resolve_harmonic(const ExperimentConfig& cfg, const TheoryConstants& c) {
  HarmonicParams h;
  h.beta = cfg.is_auto("beta") ? 2.0 / (c.c_hat * c.mu) : cfg.get_double("beta");
  h.gamma = cfg.is_auto("gamma") ? h.beta * c.l_hat * c.k_g / c.mu - 1.0 : cfg.get_double("gamma");
  return h;
}

std::unique_ptr<Preconditioner> make_preconditioner(const QuadraticModel& model, const std::string& mode, int s,
                                                    double v) {
  if (mode == "identity") return std::make_unique<IdentityPreconditioner>(model.dim());
  DeflationSpec spec;
  if (mode == "top_to_one") {
    spec = DeflationSpec::top_to_one(s);
  } else if (mode == "top_to_common") {
    spec = DeflationSpec::top_to_common(s, v);
  } else if (mode == "bottom_to_one") {
    spec = DeflationSpec::bottom_to_one(s);
  } else {
    throw InputError("unknown preconditioner mode '" + mode + "'");
  }
  return std::make_unique<SpectralDeflation>(build_deflation(model, spec));
}

std::vector<double> tail_means(const Trajectory& t, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw InputError("tail_fraction must be in (0, 1]");
  const std::size_t m = t.size();
  const std::size_t keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tail_fraction * m)));
  std::vector<double> out;
  for (const auto& row : t.per_seed) {
    double s = 0.0;
    for (std::size_t j = m - keep; j < m; ++j) s += row[j];
    out.push_back(s / static_cast<double>(keep));
  }
  return out;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw InputError("median of an empty list");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// ---------------------------------------------------------------------------

std::vector<std::string> cmd_quad_sweep(const ExperimentConfig& cfg) {
  const QuadraticModel model = model_from_config(cfg);
  const double alpha = resolve_alpha(cfg, model);
  const RunConfig rc = run_config(cfg, Schedule::fixed(alpha));
  const double init_var = rc.init_std * rc.init_std;
  const double tail = cfg.get_double("tail_fraction");
  const int common_s = static_cast<int>(cfg.get_long("common_s"));

  OutputDir out(cfg, "quad-sweep");
  out.write_config(cfg, cfg.is_auto("alpha_bar") ? std::map<std::string, std::string>{{"alpha_bar", format_real(alpha)}}
                                                 : std::map<std::string, std::string>{});
  out.write_seeds({{"seeds", rc.seeds}});
  out.note("alpha_bar", format17(alpha));
  out.note("record_every", std::to_string(rc.record_every));

  struct Curve {
    std::string panel;
    std::string label;
    std::string mode;
    int s;
    double v;
  };
  std::vector<Curve> curves;
  for (const std::string panel : {"top_to_one", "top_to_common", "bottom_to_one"}) {
    curves.push_back({panel, "identity", "identity", 0, 0.0});
    if (panel == "top_to_common") {
      for (double v : cfg.get_doubles("deflate_v"))
        curves.push_back({panel, "v" + format_real(v), panel, common_s, v});
    } else {
      for (long s : cfg.get_longs("deflate_s"))
        curves.push_back({panel, "s" + std::to_string(s), panel, static_cast<int>(s), 1.0});
    }
  }

  auto constants = open_out(out.path("constants.csv"));
  constants << "panel,label,l_hat,c_hat,k_noise,kappa_eff,floor_c,stationary_floor\n";
  auto terminal = open_out(out.path("terminal.csv"));
  terminal << "panel,label,median_tail_gap,mean_tail_gap,stationary_floor\n";

  std::map<std::string, Trajectory> identity_cache;
  for (const Curve& curve : curves) {
    const auto p = make_preconditioner(model, curve.mode, curve.s, curve.v);
    const TheoryConstants c = constants_for(model, *p);
    Trajectory t;
    if (curve.mode == "identity" && !identity_cache.empty()) {
      t = identity_cache.begin()->second;
    } else {
      t = run_psgd(model, *p, rc);
      if (curve.mode == "identity") identity_cache.emplace("identity", t);
    }
    const LossRecursion oracle = exact_loss_recursion(model, *p, rc.schedule, init_var, rc.iters + 1, rc.record_every);
    const auto bound = fixed_bound_column(c, alpha, mean_of(column(t, 0)), t.ks);
    write_result_table(out.path(curve.panel + "/" + curve.label + ".csv").string(), t.ks, t.loss_mean, t.loss_std,
                       bound, oracle.gaps);

    const double floor_c = c.c_hat > 0.0 ? alpha * c.l_hat * c.k_noise / (2.0 * c.c_hat * c.mu) : 0.0;
    constants << curve.panel << ',' << curve.label << ',' << format17(c.l_hat) << ',' << format17(c.c_hat) << ','
              << format17(c.k_noise) << ',' << format17(c.kappa_eff) << ',' << format17(floor_c) << ','
              << format17(oracle.stationary_floor) << '\n';
    const auto tails = tail_means(t, tail);
    terminal << curve.panel << ',' << curve.label << ',' << format17(median(tails)) << ',' << format17(mean_of(tails))
             << ',' << format17(oracle.stationary_floor) << '\n';
  }

  // Full deflation M = H as a reference row.
  {
    const auto p = make_preconditioner(model, "top_to_one", static_cast<int>(model.dim()), 1.0);
    const TheoryConstants c = constants_for(model, *p);
    const LossRecursion oracle = exact_loss_recursion(model, *p, rc.schedule, init_var, 1, 1);
    constants << "reference,full_deflation," << format17(c.l_hat) << ',' << format17(c.c_hat) << ','
              << format17(c.k_noise) << ',' << format17(c.kappa_eff) << ','
              << format17(alpha * c.l_hat * c.k_noise / (2.0 * c.c_hat * c.mu)) << ','
              << format17(oracle.stationary_floor) << '\n';
  }
  return out.finish();
}

std::vector<std::string> cmd_bounds(const ExperimentConfig& cfg) {
  const QuadraticModel model = model_from_config(cfg);
  const std::string mode = cfg.get_string("deflate_mode");
  const int s = mode == "top_to_common" ? static_cast<int>(cfg.get_long("common_s"))
                                        : static_cast<int>(cfg.get_longs("deflate_s").front());
  const auto p = make_preconditioner(model, mode, s, cfg.get_doubles("deflate_v").front());
  const TheoryConstants c = constants_for(model, *p);

  std::map<std::string, std::string> resolved;
  Schedule schedule;
  const bool harmonic = cfg.get_string("schedule") == "harmonic";
  HarmonicParams hp;
  if (harmonic) {
    hp = resolve_harmonic(cfg, c);
    schedule = Schedule::harmonic(hp.beta, hp.gamma);
    if (cfg.is_auto("beta")) resolved["beta"] = format_real(hp.beta);
    if (cfg.is_auto("gamma")) resolved["gamma"] = format_real(hp.gamma);
    // Validate before any run so an inadmissible (beta, gamma) fails fast.
    bound_diminishing(c, hp.beta, hp.gamma, 0.0, 1);
  } else {
    const double alpha = resolve_alpha(cfg, model);
    schedule = Schedule::fixed(alpha);
    if (cfg.is_auto("alpha_bar")) resolved["alpha_bar"] = format_real(alpha);
    fixed_rate_bound(c, alpha, 0.0);
  }
  const RunConfig rc = run_config(cfg, schedule);

  OutputDir out(cfg, "bounds");
  out.write_config(cfg, resolved);
  out.write_seeds({{"seeds", rc.seeds}});
  out.note("schedule", harmonic ? "harmonic" : "fixed");
  out.note("preconditioner", mode);

  const Trajectory t = run_psgd(model, *p, rc);
  const LossRecursion oracle =
      exact_loss_recursion(model, *p, schedule, rc.init_std * rc.init_std, rc.iters + 1, rc.record_every);
  std::vector<double> bound;
  if (harmonic) {
    // Average of the per-seed envelopes, each evaluated at that seed's own
    // initial gap.
    const auto gap1 = column(t, 0);
    for (long k : t.ks) {
      double acc = 0.0;
      for (double g : gap1) acc += bound_diminishing(c, hp.beta, hp.gamma, g, k);
      bound.push_back(acc / static_cast<double>(gap1.size()));
    }
  } else {
    bound = fixed_bound_column(c, schedule.alpha_bar, mean_of(column(t, 0)), t.ks);
  }
  write_result_table(out.path("bounds.csv").string(), t.ks, t.loss_mean, t.loss_std, bound, oracle.gaps);

  auto summary = open_out(out.path("constants.csv"));
  summary << "l_hat,c_hat,k_noise,kappa_eff,mu,mu_g,k_g,stationary_floor\n"
          << format17(c.l_hat) << ',' << format17(c.c_hat) << ',' << format17(c.k_noise) << ','
          << format17(c.kappa_eff) << ',' << format17(c.mu) << ',' << format17(c.mu_g) << ',' << format17(c.k_g)
          << ',' << format17(oracle.stationary_floor) << '\n';
  return out.finish();
}

std::vector<std::string> cmd_basin(const ExperimentConfig& cfg) {
  const QuadraticModel model = model_from_config(cfg);
  const std::string mode = cfg.get_string("deflate_mode");
  const int s = mode == "top_to_common" ? static_cast<int>(cfg.get_long("common_s"))
                                        : static_cast<int>(cfg.get_longs("deflate_s").front());
  const auto p = make_preconditioner(model, mode, s, cfg.get_doubles("deflate_v").front());
  const TheoryConstants c = constants_for(model, *p);
  const double init_std = cfg.get_double("init_std");
  const double gap_ref = 0.5 * init_std * init_std * model.hess.trace();
  const double r_ref = std::sqrt(2.0 * gap_ref / c.c_hat);
  const long cap = cfg.get_long("basin_horizon_cap");

  OutputDir out(cfg, "basin");
  out.write_config(cfg, {});
  out.write_seeds({{"seeds", cfg.get_seeds("seeds")}});
  out.note("r_reference", format17(r_ref));
  out.note("alpha_qg", format17(c.c_hat));
  out.note("mu_pl", format17(c.c_hat));

  auto table = open_out(out.path("basin.csv"));
  table << "r,alpha,stay_fraction,bound\n";
  auto details = open_out(out.path("basin_details.csv"));
  details << "r,alpha,alpha_limit,horizon,seeds,stay_fraction,binomial_se,bound,mean_initial_gap,r_plus,"
             "conditioned_final_gap,unconditioned_final_gap\n";

  for (double rm : cfg.get_doubles("basin_r")) {
    BasinSpec basin = quadratic_basin(c, rm * r_ref, 2.0 * rm * r_ref);
    const double limit = local_alpha_limit(c, basin);
    for (double frac : cfg.get_doubles("basin_alpha")) {
      if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("basin_alpha entries must lie in (0, 1)");
      const double alpha = frac * limit;
      RunConfig rc = run_config(cfg, Schedule::fixed(alpha));
      rc.iters = basin_horizon(model, *p, alpha, init_std * init_std, cap);
      rc.record_every = rc.iters;
      const BasinResult res = basin_stability_mc(model, *p, basin, rc);
      table << format17(basin.r) << ',' << format17(alpha) << ',' << format17(res.stay_fraction) << ','
            << format17(res.bound) << '\n';
      details << format17(basin.r) << ',' << format17(alpha) << ',' << format17(limit) << ',' << res.horizon << ','
              << res.seeds << ',' << format17(res.stay_fraction) << ',' << format17(res.binomial_se) << ','
              << format17(res.bound) << ',' << format17(res.mean_initial_gap) << ',' << format17(res.r_plus) << ','
              << format17(res.conditioned_final_gap) << ',' << format17(res.unconditioned_final_gap) << '\n';
    }
  }
  return out.finish();
}

std::vector<std::string> cmd_franke(const ExperimentConfig& cfg) {
  const FrankeTask task(Mlp(layer_dims(cfg), activation_from_string(cfg.get_string("activation"))),
                        static_cast<int>(cfg.get_long("franke_points")), cfg.get_double("franke_noise_var"));
  const long phase1 = cfg.get_long("phase1_epochs");
  const long window = cfg.get_long("final_window");

  TwoPhaseConfig tp;
  tp.phase2_epochs = cfg.get_long("phase2_epochs");
  tp.phase1_lr = cfg.get_double("phase1_lr");
  tp.phase1_seeds = cfg.get_seeds("phase1_seeds");
  tp.phase2_seeds = cfg.get_seeds("phase2_seeds");
  tp.jobs = static_cast<int>(cfg.get_long("jobs"));
  tp.validate();

  std::vector<Method> methods;
  for (const auto& name : [&] {
         std::vector<std::string> names;
         std::stringstream ss(cfg.get_string("methods"));
         std::string item;
         while (std::getline(ss, item, ',')) {
           item.erase(std::remove_if(item.begin(), item.end(), [](char ch) { return ch == ' ' || ch == '\t'; }),
                      item.end());
           names.push_back(item);
         }
         return names;
       }())
    methods.push_back(method_from_string(name));

  auto spec_for = [&](Method m, double lr) {
    OptimizerSpec spec;
    spec.method = m;
    spec.lr = lr;
    spec.cg = cg_from(cfg);
    spec.lbfgs_memory = static_cast<int>(cfg.get_long("lbfgs_memory"));
    return spec;
  };

  OutputDir out(cfg, "franke");
  std::map<std::string, std::string> resolved;

  // Learning-rate selection: every seed pair, shortened phase-2 budget,
  // median final loss; a value that diverges on any seed is disqualified.
  std::map<Method, double> lrs;
  const bool search = cfg.get_bool("lr_search");
  std::ofstream search_log;
  if (search) {
    search_log = open_out(out.path("lr_search.csv"));
    search_log << "method,lr,median_final_loss\n";
  }
  for (Method m : methods) {
    const std::string name(to_string(m));
    if (!search) {
      lrs[m] = cfg.get_double("lr_" + name);
      continue;
    }
    TwoPhaseConfig probe = tp;
    probe.phase2_epochs = cfg.get_long("lr_search_epochs");
    double best = std::numeric_limits<double>::infinity();
    double best_lr = 0.0;
    for (double lr : cfg.get_doubles("lr_grid_" + name)) {
      std::string cell = "diverged";
      try {
        const Trajectory t = two_phase_run(task, phase1, spec_for(m, lr), probe);
        std::vector<double> finals;
        for (const auto& row : t.per_seed) finals.push_back(final_loss(row, window));
        const double f = median(finals);
        cell = format17(f);
        if (f < best) {
          best = f;
          best_lr = lr;
        }
      } catch (const DivergenceError&) {
      } catch (const NumericalError&) {
      }
      search_log << name << ',' << format17(lr) << ',' << cell << '\n';
    }
    if (!(best_lr > 0.0)) throw NumericalError("learning-rate search: every grid value diverged for " + name, 0);
    lrs[m] = best_lr;
    resolved["lr_" + name] = format_real(best_lr);
  }
  if (search) search_log.close();

  out.write_config(cfg, resolved);
  out.write_seeds({{"phase1", tp.phase1_seeds}, {"phase2", tp.phase2_seeds}});
  out.note("phase_boundary_epoch", std::to_string(phase1));
  out.note("phase1_optimizer", "adam");
  out.note("noise_variance", format17(cfg.get_double("franke_noise_var")));
  out.note("time_csv", "wall-clock seconds of the optimizer loop, excluding data generation; not reproducible");

  auto summary = open_out(out.path("summary.csv"));
  summary << "method,lr,median_final_loss,mean_final_loss\n";
  for (Method m : methods) {
    const std::string name(to_string(m));
    out.note("method", name);
    const Trajectory t = two_phase_run(task, phase1, spec_for(m, lrs[m]), tp);
    write_result_table(out.path(name + "_loss.csv").string(), t.ks, t.loss_mean, t.loss_std);
    {
      auto time_csv = open_out(out.path(name + "_time.csv"));
      time_csv << "k,elapsed_s,mean_loss\n";
      for (std::size_t j = 0; j < t.size(); ++j)
        time_csv << t.ks[j] << ',' << format17(t.elapsed_mean[j]) << ',' << format17(t.loss_mean[j]) << '\n';
    }
    std::vector<double> finals;
    for (const auto& row : t.per_seed) finals.push_back(final_loss(row, window));
    summary << name << ',' << format17(lrs[m]) << ',' << format17(median(finals)) << ',' << format17(mean_of(finals))
            << '\n';
  }
  return out.finish();
}

}  // namespace psgd
