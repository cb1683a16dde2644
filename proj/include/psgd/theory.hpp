#pragma once

#include <cstdint>
#include <vector>

#include "psgd/engine.hpp"
#include "psgd/linalg.hpp"
#include "psgd/precond.hpp"
#include "psgd/quadratic.hpp"

namespace psgd {

/// Fixed-rate envelope C + (1 - abar c mu)^{k-1} (gap_1 - C).
struct FixedRateBound {
  double floor_c = 0.0;
  double contraction = 0.0;
  double initial_gap = 0.0;

  double at(long k) const;
};

/// Throws InputError unless 0 < alpha_bar <= mu / (L K_G).
FixedRateBound fixed_rate_bound(const TheoryConstants& c, double alpha_bar, double initial_gap);

/// Expected-gap envelope for a fixed learning rate on a globally strongly
/// convex (in the M-metric) objective.
double bound_fixed(const TheoryConstants& c, double alpha_bar, double initial_gap, long k);

/// nu = max{beta^2 L K / (2 (beta c mu - 1)), (gamma + 1) gap_1}.
double harmonic_nu(const TheoryConstants& c, double beta, double gamma, double initial_gap);

/// nu / (gamma + k) for alpha_k = beta / (gamma + k). Requires
/// beta > 1 / (c mu), gamma > 0 and alpha_1 <= mu / (L K_G).
double bound_diminishing(const TheoryConstants& c, double beta, double gamma, double initial_gap,
                         long k);

/// Local basin N_r = {w : dist_M(w, S) <= r}.
struct BasinSpec {
  double r = 1.0;
  double r_plus = 2.0;
  double alpha_qg = 1.0;
  double mu_pl = 1.0;

  void validate() const;
};

/// For the quadratic, quadratic growth and PL both hold with lambda_min(M^{-1} H).
BasinSpec quadratic_basin(const TheoryConstants& c, double r, double r_plus);

struct LocalFixedBound {
  double bound = 0.0;
  double rho = 0.0;
  double floor = 0.0;
};

/// Largest admissible fixed rate of the local analysis (exclusive):
/// min{mu/(L K_G), alpha_QG mu_PL mu r^2 / (L K), 1/(mu mu_PL)}.
double local_alpha_limit(const TheoryConstants& c, const BasinSpec& basin);

/// Conditional envelope inside the basin. Throws InputError naming the
/// clause of the step-size condition that fails.
LocalFixedBound bound_local_fixed(const TheoryConstants& c, const BasinSpec& basin, double alpha_bar,
                                  double initial_gap, long k);

/// max{0, 1 - gap_1 / ((alpha_QG / 2) r^2)}.
double basin_stability_bound(const BasinSpec& basin, double initial_gap);

/// Harmonic envelope inside the basin; requires
/// 2/(mu_PL mu) < beta <= mu (gamma + 1) / (L K_G).
double bound_local_diminishing(const TheoryConstants& c, const BasinSpec& basin, double beta,
                               double gamma, double initial_gap, long k);

// ---------------------------------------------------------------------------
// Exact second-moment oracle for the quadratic

/// Expected gaps E[F(w_k) - F*] under w_1 ~ N(w*, init_cov_scale I) and
/// Gaussian noise, propagated through the covariance recursion
///   C_{k+1} = A_k C_k A_k^T + alpha_k^2 M^{-1} (sigma^2/B) H M^{-1},
///   A_k = I - alpha_k M^{-1} H,  gap_k = tr(H C_k) / 2.
struct LossRecursion {
  std::vector<long> ks;
  std::vector<double> gaps;
  /// tr(H C_inf) / 2 for a fixed rate; 0 for a harmonic schedule.
  double stationary_floor = 0.0;
};

/// Gaps at k = 1, 1 + record_every, ... <= k_max. A fixed rate whose
/// iteration matrix has spectral radius >= 1 throws DivergenceError.
LossRecursion exact_loss_recursion(const QuadraticModel& model, const Preconditioner& p,
                                   const Schedule& schedule, double init_cov_scale, long k_max,
                                   long record_every = 1);

/// Fixed-rate form returning every k = 1..k_max.
LossRecursion exact_loss_recursion(const QuadraticModel& model, const Preconditioner& p,
                                   double alpha_bar, double init_cov_scale, long k_max);

/// Fixed point of X = A X A^T + Q by doubling, stopped at 1e-12 relative
/// change of tr(H X).
Mat stationary_covariance(const Mat& a, const Mat& q, const Mat& h);

/// E[F(w - alpha M^{-1} g) - F*] for g = grad F(w) + zeta, in closed form.
double expected_gap_after_step(const QuadraticModel& model, const Preconditioner& p, const Vec& w,
                               double alpha);

struct DescentPoint {
  double gap = 0.0;
  double mc_mean = 0.0;
  double mc_se = 0.0;
  /// (1 - alpha c mu) gap + alpha^2 L K / 2.
  double rhs = 0.0;
  /// Closed-form one-step expectation.
  double exact = 0.0;
  bool pass = false;
};

struct DescentReport {
  std::vector<DescentPoint> points;
  bool all_pass() const;
};

/// Monte Carlo check of the one-step descent inequality at each sample
/// point: pass when mc_mean <= rhs + 3 mc_se. Requires n_mc >= 1e4 and
/// 0 < alpha <= mu / (L K_G).
DescentReport check_descent_lemma(const QuadraticModel& model, const Preconditioner& p,
                                  const std::vector<Vec>& w_samples, double alpha, long n_mc,
                                  std::uint64_t seed);

struct BasinResult {
  double stay_fraction = 0.0;
  double bound = 0.0;
  /// sqrt(p (1 - p) / n) at the observed stay fraction.
  double binomial_se = 0.0;
  double mean_initial_gap = 0.0;
  /// r + max_k ||w_{k+1} - w_k||_M over all seeds.
  double r_plus = 0.0;
  /// Mean final gap over seeds that stayed in N_r (NaN if none did).
  double conditioned_final_gap = 0.0;
  double unconditioned_final_gap = 0.0;
  long horizon = 0;
  long seeds = 0;
};

/// Fraction of seeds whose iterates stay in N_r for cfg.iters steps, with
/// w_1 ~ N(w*, init_std^2 I) resampled until it lies in N_r. The bound is
/// basin_stability_bound at the mean realized initial gap.
BasinResult basin_stability_mc(const QuadraticModel& model, const Preconditioner& p,
                               const BasinSpec& basin, const RunConfig& cfg);

/// 10 x the first k at which the exact recursion is within 1% of its
/// stationary floor (or below 1e-4 gap_1 when the floor is 0), capped.
long basin_horizon(const QuadraticModel& model, const Preconditioner& p, double alpha_bar,
                   double init_cov_scale, long cap);

}  // namespace psgd
