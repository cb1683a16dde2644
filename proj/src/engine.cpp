#include "psgd/engine.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "psgd/parallel.hpp"

namespace psgd {

void Schedule::validate() const {
  if (kind == Kind::Fixed) {
    if (!(alpha_bar > 0.0) || !std::isfinite(alpha_bar))
      throw InputError("schedule: fixed learning rate must be positive, got " + std::to_string(alpha_bar));
    return;
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InputError("schedule: harmonic beta must be > 0");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InputError("schedule: harmonic gamma must be > 0");
}

void RunConfig::validate() const {
  if (iters < 1) throw InputError("run config: iters must be >= 1");
  if (seeds.empty()) throw InputError("run config: seed list is empty");
  if (record_every < 1) throw InputError("run config: record_every must be >= 1");
  if (!(init_std >= 0.0) || !std::isfinite(init_std)) throw InputError("run config: init_std must be >= 0");
  schedule.validate();
}

std::vector<long> RunConfig::record_points() const {
  std::vector<long> ks;
  for (long k = 1; k <= iters + 1; k += record_every) ks.push_back(k);
  return ks;
}

double Trajectory::standard_error(std::size_t j) const {
  const std::size_t n = num_seeds();
  return n == 0 ? 0.0 : loss_std[j] / std::sqrt(static_cast<double>(n));
}

void summarize(Trajectory& t) {
  const std::size_t n = t.per_seed.size();
  const std::size_t m = t.ks.size();
  t.loss_mean.assign(m, 0.0);
  t.loss_std.assign(m, 0.0);
  t.per_seed_final.assign(n, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n; ++s) sum += t.per_seed[s][j];
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      const double dev = t.per_seed[s][j] - mean;
      ss += dev * dev;
    }
    t.loss_mean[j] = mean;
    t.loss_std[j] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  }
  for (std::size_t s = 0; s < n; ++s) t.per_seed_final[s] = m ? t.per_seed[s][m - 1] : 0.0;
}

Vec psgd_step(const Vec& w, const Vec& g, double alpha_k, const Preconditioner& p) {
  if (w.size() != g.size() || w.size() != p.dim()) throw InputError("psgd_step: dimension mismatch");
  return w - alpha_k * p.apply_inverse(g);
}

Vec sample_initial_point(const QuadraticModel& model, double init_std, Rng& init_rng) {
  return model.w_star + init_std * standard_normal(model.dim(), init_rng);
}

std::vector<double> run_psgd_seed(const QuadraticModel& model, const Preconditioner& p,
                                  const RunConfig& cfg, std::uint64_t seed, const Vec& w1,
                                  const IterateObserver& observer) {
  if (w1.size() != model.dim() || p.dim() != model.dim())
    throw InputError("run_psgd: dimension mismatch between model, preconditioner and start");
  Rng noise(seed, "noise");
  const double noise_scale = model.sigma / std::sqrt(static_cast<double>(model.batch));

  std::vector<double> recorded;
  recorded.reserve(static_cast<std::size_t>(cfg.iters / cfg.record_every + 1));
  Vec w = w1;
  for (long k = 1;; ++k) {
    const Vec e = w - model.w_star;
    Vec g = model.hess * e;
    const double gap = 0.5 * e.dot(g);
    if (!std::isfinite(gap) || gap > kDivergenceLimit) throw DivergenceError(seed, k, gap);
    if ((k - 1) % cfg.record_every == 0) recorded.push_back(gap);
    if (observer) observer(k, w);
    if (k == cfg.iters + 1) break;
    if (noise_scale != 0.0) g += noise_scale * (model.hess_sqrt * standard_normal(model.dim(), noise));
    w -= cfg.schedule.at(k) * p.apply_inverse(g);
  }
  return recorded;
}

Trajectory run_psgd(const QuadraticModel& model, const Preconditioner& p, const RunConfig& cfg) {
  cfg.validate();
  Trajectory t;
  t.ks = cfg.record_points();
  t.per_seed.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
    Rng init(cfg.seeds[i], "init");
    const Vec w1 = sample_initial_point(model, cfg.init_std, init);
    t.per_seed[i] = run_psgd_seed(model, p, cfg, cfg.seeds[i], w1);
  });
  summarize(t);
  return t;
}

Vec momentum_step(MomentumState& state, const Vec& w, const Vec& g, double alpha, double beta) {
  if (state.m.size() != g.size()) state.m = Vec::Zero(g.size());
  state.m = beta * state.m + g;
  return w - alpha * state.m;
}

Vec adam_step(AdamState& state, const Vec& w, const Vec& g, double alpha, double beta1, double beta2,
              double eps) {
  if (state.m.size() != g.size()) {
    state.m = Vec::Zero(g.size());
    state.v = Vec::Zero(g.size());
    state.t = 0;
  }
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * g;
  state.v = beta2 * state.v + (1.0 - beta2) * g.cwiseAbs2();
  const double t = static_cast<double>(state.t);
  const double alpha_t = alpha * std::sqrt(1.0 - std::pow(beta2, t)) / (1.0 - std::pow(beta1, t));
  return w - alpha_t * state.m.cwiseQuotient((state.v.cwiseSqrt().array() + eps).matrix());
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Sgd: return "sgd";
    case Method::Momentum: return "momentum";
    case Method::Adam: return "adam";
    case Method::Lbfgs: return "lbfgs";
    case Method::CgHessian: return "cg_hessian";
    case Method::CgGgn: return "cg_ggn";
  }
  return "unknown";
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods{Method::Sgd,   Method::Momentum,  Method::Adam,
                                           Method::Lbfgs, Method::CgHessian, Method::CgGgn};
  return methods;
}

Method method_from_string(std::string_view name) {
  for (Method m : all_methods())
    if (to_string(m) == name) return m;
  throw InputError("unknown optimizer '" + std::string(name) +
                   "' (expected sgd, momentum, adam, lbfgs, cg_hessian or cg_ggn)");
}

Optimizer::Optimizer(OptimizerSpec spec, Index dim) : spec_(spec), lbfgs_(dim, spec.lbfgs_memory) {
  if (!(spec_.lr > 0.0)) throw InputError("optimizer: learning rate must be > 0");
  spec_.cg.validate();
}

Vec Optimizer::step(const Vec& w, const Vec& g, const EpochObjective& objective) {
  switch (spec_.method) {
    case Method::Sgd:
      return w - spec_.lr * g;
    case Method::Momentum:
      return momentum_step(momentum_, w, g, spec_.lr, spec_.momentum);
    case Method::Adam:
      return adam_step(adam_, w, g, spec_.lr, spec_.beta1, spec_.beta2, spec_.eps);
    case Method::Lbfgs:
      if (prev_w_.size() == w.size()) lbfgs_.push(w - prev_w_, g - prev_g_);
      prev_w_ = w;
      prev_g_ = g;
      return w + spec_.lr * lbfgs_direction(lbfgs_, g);
    case Method::CgHessian:
    case Method::CgGgn: {
      const CurvatureKind kind =
          spec_.method == Method::CgHessian ? CurvatureKind::Hessian : CurvatureKind::Ggn;
      const LinearOperator curvature = [&](const Vec& v) {
        return objective.curvature_product(kind, w, v);
      };
      return w - spec_.lr * curvature_cg_precondition(curvature, g, spec_.cg);
    }
  }
  return w;
}

void TwoPhaseConfig::validate() const {
  if (phase2_epochs < 0) throw InputError("two-phase: phase2_epochs must be >= 0");
  if (!(phase1_lr > 0.0)) throw InputError("two-phase: phase1_lr must be > 0");
  if (phase1_seeds.empty()) throw InputError("two-phase: seed list is empty");
  if (phase1_seeds.size() != phase2_seeds.size())
    throw InputError("two-phase: phase1_seeds and phase2_seeds must have equal length");
}

Trajectory two_phase_run(const TrainingTask& task, long phase1_epochs, const OptimizerSpec& phase2,
                         const TwoPhaseConfig& cfg) {
  if (phase1_epochs < 0) throw InputError("two-phase: phase1_epochs must be >= 0");
  cfg.validate();
  const long total = phase1_epochs + cfg.phase2_epochs;
  if (total < 1) throw InputError("two-phase: total epoch budget must be >= 1");

  Trajectory t;
  for (long e = 1; e <= total; ++e) t.ks.push_back(e);
  const std::size_t n = cfg.phase1_seeds.size();
  t.per_seed.resize(n);
  std::vector<std::vector<double>> elapsed(n);

  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    using Clock = std::chrono::steady_clock;
    const std::uint64_t seed1 = cfg.phase1_seeds[i];
    Rng init(seed1, "init");
    Rng data1(seed1, "data");
    Rng data2(cfg.phase2_seeds[i], "data");

    OptimizerSpec warm;
    warm.method = Method::Adam;
    warm.lr = cfg.phase1_lr;
    const Index p = task.num_params();
    Optimizer opt1(warm, p);
    Optimizer opt2(phase2, p);

    Vec theta = task.initial_params(init);
    Vec g(p);
    auto& losses = t.per_seed[i];
    auto& times = elapsed[i];
    losses.reserve(static_cast<std::size_t>(total));
    times.reserve(static_cast<std::size_t>(total));
    double clock = 0.0;
    for (long e = 1; e <= total; ++e) {
      const bool first_phase = e <= phase1_epochs;
      const auto objective = task.sample_epoch(first_phase ? data1 : data2);
      const auto start = Clock::now();
      const double value = objective->loss_grad(theta, &g);
      if (!std::isfinite(value) || value > kDivergenceLimit) throw DivergenceError(seed1, e, value);
      theta = (first_phase ? opt1 : opt2).step(theta, g, *objective);
      clock += std::chrono::duration<double>(Clock::now() - start).count();
      losses.push_back(value);
      times.push_back(clock);
    }
  });

  summarize(t);
  t.elapsed_mean.assign(t.ks.size(), 0.0);
  for (std::size_t j = 0; j < t.ks.size(); ++j) {
    for (std::size_t i = 0; i < n; ++i) t.elapsed_mean[j] += elapsed[i][j];
    t.elapsed_mean[j] /= static_cast<double>(n);
  }
  return t;
}

}  // namespace psgd
