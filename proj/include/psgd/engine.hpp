#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "psgd/linalg.hpp"
#include "psgd/precond.hpp"
#include "psgd/quadratic.hpp"
#include "psgd/rng.hpp"

namespace psgd {

/// Loss above this (or non-finite) counts as divergence.
inline constexpr double kDivergenceLimit = 1e12;

/// Learning-rate schedule, indexed from k = 1.
struct Schedule {
  enum class Kind { Fixed, Harmonic };

  Kind kind = Kind::Fixed;
  double alpha_bar = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  static Schedule fixed(double alpha_bar) { return {Kind::Fixed, alpha_bar, 0.0, 0.0}; }
  /// alpha_k = beta / (gamma + k).
  static Schedule harmonic(double beta, double gamma) { return {Kind::Harmonic, 0.0, beta, gamma}; }

  double at(long k) const {
    return kind == Kind::Fixed ? alpha_bar : beta / (gamma + static_cast<double>(k));
  }
  void validate() const;
};

struct RunConfig {
  long iters = 1000;
  std::vector<std::uint64_t> seeds;
  Schedule schedule;
  long record_every = 1;
  /// w_1 = w* + init_std * z, z standard normal.
  double init_std = 1e-2;
  /// Worker threads; results are identical for any value.
  int jobs = 1;

  void validate() const;
  /// 1, 1 + record_every, ... up to iters + 1.
  std::vector<long> record_points() const;
};

/// Per-iteration loss statistics across seeds. For quadratic tasks the
/// recorded quantity is the gap F(w_k) - F*; for training tasks it is the
/// training loss.
struct Trajectory {
  std::vector<long> ks;
  std::vector<double> loss_mean;
  /// Sample standard deviation across seeds (0 for a single seed).
  std::vector<double> loss_std;
  std::vector<double> per_seed_final;
  /// per_seed[s][j] is the value for seed s at ks[j].
  std::vector<std::vector<double>> per_seed;
  /// Mean cumulative optimizer-loop seconds at ks[j]; empty when not timed.
  std::vector<double> elapsed_mean;

  std::size_t size() const { return ks.size(); }
  std::size_t num_seeds() const { return per_seed.size(); }
  /// loss_std[j] / sqrt(seeds).
  double standard_error(std::size_t j) const;
};

/// Fill mean/std/final from per_seed.
void summarize(Trajectory& t);

/// w - alpha_k M^{-1} g.
Vec psgd_step(const Vec& w, const Vec& g, double alpha_k, const Preconditioner& p);

/// w_1 = w* + init_std z drawn from the seed's "init" stream.
Vec sample_initial_point(const QuadraticModel& model, double init_std, Rng& init_rng);

/// Called with (k, w_k) for k = 1 .. iters + 1.
using IterateObserver = std::function<void(long, const Vec&)>;

/// One seed of preconditioned SGD from a given start. Noise is drawn from
/// the seed's "noise" stream. Returns gaps at cfg.record_points(); throws
/// DivergenceError past kDivergenceLimit.
std::vector<double> run_psgd_seed(const QuadraticModel& model, const Preconditioner& p,
                                  const RunConfig& cfg, std::uint64_t seed, const Vec& w1,
                                  const IterateObserver& observer = {});

/// Multi-seed preconditioned SGD on the quadratic; deterministic in the seeds
/// regardless of cfg.jobs.
Trajectory run_psgd(const QuadraticModel& model, const Preconditioner& p, const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Baseline optimizers

struct MomentumState {
  Vec m;
};

/// Heavy ball: m <- beta m + g; w <- w - alpha m.
Vec momentum_step(MomentumState& state, const Vec& w, const Vec& g, double alpha, double beta = 0.9);

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;
};

/// Adam with bias correction folded into the step size,
/// alpha_t = alpha sqrt(1 - beta2^t) / (1 - beta1^t), and eps added to the
/// uncorrected sqrt(v). Equivalent to the diagonal preconditioner
/// diag(sqrt(v_hat) + eps') applied to the bias-corrected first moment.
Vec adam_step(AdamState& state, const Vec& w, const Vec& g, double alpha, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8);

// ---------------------------------------------------------------------------
// Training tasks and the two-phase protocol

enum class CurvatureKind { Hessian, Ggn };

/// Loss on one epoch's data.
class EpochObjective {
 public:
  virtual ~EpochObjective() = default;
  /// Returns the loss; writes the gradient when grad is non-null.
  virtual double loss_grad(const Vec& theta, Vec* grad) const = 0;
  virtual Vec curvature_product(CurvatureKind kind, const Vec& theta, const Vec& v) const = 0;
};

class TrainingTask {
 public:
  virtual ~TrainingTask() = default;
  virtual Index num_params() const = 0;
  virtual Vec initial_params(Rng& rng) const = 0;
  /// Draw the data for one epoch.
  virtual std::unique_ptr<EpochObjective> sample_epoch(Rng& rng) const = 0;
};

enum class Method { Sgd, Momentum, Adam, Lbfgs, CgHessian, CgGgn };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
const std::vector<Method>& all_methods();

struct OptimizerSpec {
  Method method = Method::Sgd;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int lbfgs_memory = 100;
  CgConfig cg{5, 1e-10, 1e-3};
};

/// Stateful optimizer for one run. step() maps (w, g) to the next iterate;
/// curvature methods query the objective at w.
class Optimizer {
 public:
  Optimizer(OptimizerSpec spec, Index dim);

  Vec step(const Vec& w, const Vec& g, const EpochObjective& objective);
  const OptimizerSpec& spec() const { return spec_; }

 private:
  OptimizerSpec spec_;
  MomentumState momentum_;
  AdamState adam_;
  LbfgsMemory lbfgs_;
  Vec prev_w_;
  Vec prev_g_;
};

struct TwoPhaseConfig {
  long phase2_epochs = 1000;
  double phase1_lr = 1e-3;
  /// Network init and phase-1 data streams.
  std::vector<std::uint64_t> phase1_seeds;
  /// Phase-2 data streams; paired with phase1_seeds by position.
  std::vector<std::uint64_t> phase2_seeds;
  int jobs = 1;

  void validate() const;
};

/// Adam (phase1_lr) for phase1_epochs, then the phase-2 optimizer from the
/// exact same weights. Records the loss at every epoch 1 .. phase1 + phase2
/// (loss on that epoch's data before its update) and the cumulative
/// optimizer-loop time, which excludes data sampling.
Trajectory two_phase_run(const TrainingTask& task, long phase1_epochs, const OptimizerSpec& phase2,
                         const TwoPhaseConfig& cfg);

}  // namespace psgd
