#include "psgd/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "psgd/parallel.hpp"

namespace psgd {

namespace {

// Relative slack on the closed "<=" step-size conditions so a rate set
// exactly to the limit is not rejected by rounding.
constexpr double kEdge = 1e-12;

std::string num(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

void check_gap(double initial_gap) {
  if (!(initial_gap >= 0.0) || !std::isfinite(initial_gap))
    throw InputError("initial gap must be finite and >= 0, got " + num(initial_gap));
}

void check_k(long k) {
  if (k < 1) throw InputError("iteration index k must be >= 1");
}

double step_limit(const TheoryConstants& c) { return c.mu / (c.l_hat * c.k_g); }

Mat metric_of(const Preconditioner& p) {
  if (auto m = p.materialize()) return *m;
  const Mat minv = dense_inverse(p);
  Eigen::LLT<Mat> llt(minv);
  if (llt.info() != Eigen::Success) throw InputError("preconditioner is not SPD");
  return llt.solve(Mat::Identity(minv.rows(), minv.cols()));
}

double trace_product(const Mat& a, const Mat& b) { return a.cwiseProduct(b.transpose()).sum(); }

}  // namespace

double FixedRateBound::at(long k) const {
  check_k(k);
  return floor_c + std::pow(contraction, static_cast<double>(k - 1)) * (initial_gap - floor_c);
}

FixedRateBound fixed_rate_bound(const TheoryConstants& c, double alpha_bar, double initial_gap) {
  check_gap(initial_gap);
  const double limit = step_limit(c);
  if (!(alpha_bar > 0.0) || alpha_bar > limit * (1.0 + kEdge)) {
    throw InputError("fixed learning rate " + num(alpha_bar) +
                     " violates 0 < alpha_bar <= mu/(L_hat K_G) = " + num(limit));
  }
  FixedRateBound b;
  b.floor_c = alpha_bar * c.l_hat * c.k_noise / (2.0 * c.c_hat * c.mu);
  b.contraction = 1.0 - alpha_bar * c.c_hat * c.mu;
  b.initial_gap = initial_gap;
  return b;
}

double bound_fixed(const TheoryConstants& c, double alpha_bar, double initial_gap, long k) {
  return fixed_rate_bound(c, alpha_bar, initial_gap).at(k);
}

double harmonic_nu(const TheoryConstants& c, double beta, double gamma, double initial_gap) {
  const double noise_term = beta * beta * c.l_hat * c.k_noise / (2.0 * (beta * c.c_hat * c.mu - 1.0));
  return std::max(noise_term, (gamma + 1.0) * initial_gap);
}

double bound_diminishing(const TheoryConstants& c, double beta, double gamma, double initial_gap,
                         long k) {
  check_gap(initial_gap);
  check_k(k);
  if (!(gamma > 0.0)) throw InputError("harmonic schedule requires gamma > 0, got " + num(gamma));
  const double beta_min = 1.0 / (c.c_hat * c.mu);
  if (!(beta > beta_min))
    throw InputError("harmonic schedule requires beta > 1/(c_hat mu) = " + num(beta_min) + ", got " +
                     num(beta));
  const double alpha1 = beta / (gamma + 1.0);
  const double limit = step_limit(c);
  if (alpha1 > limit * (1.0 + kEdge))
    throw InputError("harmonic schedule requires alpha_1 = beta/(gamma+1) = " + num(alpha1) +
                     " <= mu/(L_hat K_G) = " + num(limit));
  return harmonic_nu(c, beta, gamma, initial_gap) / (gamma + static_cast<double>(k));
}

void BasinSpec::validate() const {
  if (!(r > 0.0)) throw InputError("basin: r must be > 0");
  if (!(r_plus > r)) throw InputError("basin: r_plus must exceed r");
  if (!(alpha_qg > 0.0)) throw InputError("basin: alpha_qg must be > 0");
  if (!(mu_pl > 0.0)) throw InputError("basin: mu_pl must be > 0");
}

BasinSpec quadratic_basin(const TheoryConstants& c, double r, double r_plus) {
  return BasinSpec{r, r_plus, c.c_hat, c.c_hat};
}

double local_alpha_limit(const TheoryConstants& c, const BasinSpec& basin) {
  const double a1 = step_limit(c);
  const double a2 = c.k_noise > 0.0
                        ? basin.alpha_qg * basin.mu_pl * c.mu * basin.r * basin.r / (c.l_hat * c.k_noise)
                        : std::numeric_limits<double>::infinity();
  const double a3 = 1.0 / (c.mu * basin.mu_pl);
  return std::min({a1, a2, a3});
}

LocalFixedBound bound_local_fixed(const TheoryConstants& c, const BasinSpec& basin, double alpha_bar,
                                  double initial_gap, long k) {
  basin.validate();
  check_gap(initial_gap);
  check_k(k);
  if (!(alpha_bar > 0.0)) throw InputError("local fixed rate must be > 0");
  const double a1 = step_limit(c);
  if (!(alpha_bar < a1))
    throw InputError("local fixed rate " + num(alpha_bar) + " violates alpha_bar < mu/(L_hat K_G) = " +
                     num(a1));
  if (c.k_noise > 0.0) {
    const double a2 = basin.alpha_qg * basin.mu_pl * c.mu * basin.r * basin.r / (c.l_hat * c.k_noise);
    if (!(alpha_bar < a2))
      throw InputError("local fixed rate " + num(alpha_bar) +
                       " violates alpha_bar < alpha_QG mu_PL mu r^2/(L_hat K) = " + num(a2));
  }
  const double a3 = 1.0 / (c.mu * basin.mu_pl);
  if (!(alpha_bar < a3))
    throw InputError("local fixed rate " + num(alpha_bar) + " violates alpha_bar < 1/(mu mu_PL) = " +
                     num(a3));

  LocalFixedBound out;
  out.rho = alpha_bar * basin.mu_pl * c.mu;
  out.floor = alpha_bar * c.l_hat * c.k_noise / (2.0 * basin.mu_pl * c.mu);
  out.bound = out.floor + std::pow(1.0 - out.rho, static_cast<double>(k - 1)) * (initial_gap - out.floor);
  return out;
}

double basin_stability_bound(const BasinSpec& basin, double initial_gap) {
  basin.validate();
  check_gap(initial_gap);
  return std::max(0.0, 1.0 - initial_gap / (0.5 * basin.alpha_qg * basin.r * basin.r));
}

double bound_local_diminishing(const TheoryConstants& c, const BasinSpec& basin, double beta,
                               double gamma, double initial_gap, long k) {
  basin.validate();
  check_gap(initial_gap);
  check_k(k);
  if (!(gamma > 0.0)) throw InputError("local harmonic schedule requires gamma > 0");
  const double lo = 2.0 / (basin.mu_pl * c.mu);
  const double hi = c.mu * (gamma + 1.0) / (c.l_hat * c.k_g);
  if (!(beta > lo) || beta > hi * (1.0 + kEdge)) {
    throw InputError("local harmonic schedule requires 2/(mu_PL mu) = " + num(lo) + " < beta <= mu(gamma+1)/(L_hat K_G) = " +
                     num(hi) + ", got beta = " + num(beta));
  }
  const double noise_term =
      beta * beta * c.l_hat * c.k_noise / (2.0 * (beta * basin.mu_pl * c.mu - 1.0));
  const double nu = std::max(noise_term, (gamma + 1.0) * initial_gap);
  return nu / (gamma + static_cast<double>(k));
}

Mat stationary_covariance(const Mat& a, const Mat& q, const Mat& h) {
  Mat x = q;
  Mat ak = a;
  double prev = trace_product(h, x);
  for (int it = 0; it < 200; ++it) {
    x += ak * x * ak.transpose();
    ak = ak * ak;
    const double cur = trace_product(h, x);
    if (!std::isfinite(cur)) throw DivergenceError("stationary covariance does not exist (recursion diverges)");
    if (std::abs(cur - prev) <= 1e-12 * std::abs(cur)) break;
    prev = cur;
  }
  return 0.5 * (x + x.transpose());
}

LossRecursion exact_loss_recursion(const QuadraticModel& model, const Preconditioner& p,
                                   const Schedule& schedule, double init_cov_scale, long k_max,
                                   long record_every) {
  schedule.validate();
  if (k_max < 1) throw InputError("exact_loss_recursion: k_max must be >= 1");
  if (record_every < 1) throw InputError("exact_loss_recursion: record_every must be >= 1");
  if (!(init_cov_scale >= 0.0)) throw InputError("exact_loss_recursion: init_cov_scale must be >= 0");
  if (p.dim() != model.dim()) throw InputError("exact_loss_recursion: dimension mismatch");

  const Index d = model.dim();
  const Mat& h = model.hess;
  const Mat minv = dense_inverse(p);
  const Mat g = minv * h;
  const double noise_var = model.sigma * model.sigma / model.batch;
  const Mat q0 = noise_var * (minv * h * minv);
  const Mat eye = Mat::Identity(d, d);

  LossRecursion out;
  Mat cov = init_cov_scale * eye;
  auto record = [&](long k) {
    out.ks.push_back(k);
    out.gaps.push_back(0.5 * trace_product(h, cov));
  };

  if (schedule.kind == Schedule::Kind::Fixed) {
    const double alpha = schedule.alpha_bar;
    const TheoryConstants c = constants_for(model, p);
    const double radius = std::max(std::abs(1.0 - alpha * c.l_hat), std::abs(1.0 - alpha * c.c_hat));
    if (!(radius < 1.0)) {
      throw DivergenceError("fixed rate " + num(alpha) + " gives iteration spectral radius " + num(radius) +
                            " >= 1 (need alpha < 2/L_hat = " + num(2.0 / c.l_hat) + ")");
    }
    const Mat a = eye - alpha * g;
    const Mat q = alpha * alpha * q0;
    Mat a_stride = eye;
    Mat s_stride = Mat::Zero(d, d);
    for (long j = 0; j < record_every; ++j) {
      s_stride = a * s_stride * a.transpose() + q;
      a_stride = a * a_stride;
    }
    record(1);
    for (long k = 1 + record_every; k <= k_max; k += record_every) {
      cov = a_stride * cov * a_stride.transpose() + s_stride;
      cov = 0.5 * (cov + cov.transpose()).eval();
      record(k);
    }
    out.stationary_floor = 0.5 * trace_product(h, stationary_covariance(a, q, h));
    return out;
  }

  record(1);
  for (long k = 1; k < k_max; ++k) {
    const double alpha = schedule.at(k);
    const Mat a = eye - alpha * g;
    cov = a * cov * a.transpose() + (alpha * alpha) * q0;
    cov = 0.5 * (cov + cov.transpose()).eval();
    if ((k) % record_every == 0) record(k + 1);
  }
  return out;
}

LossRecursion exact_loss_recursion(const QuadraticModel& model, const Preconditioner& p,
                                   double alpha_bar, double init_cov_scale, long k_max) {
  return exact_loss_recursion(model, p, Schedule::fixed(alpha_bar), init_cov_scale, k_max, 1);
}

double expected_gap_after_step(const QuadraticModel& model, const Preconditioner& p, const Vec& w,
                               double alpha) {
  const Mat minv = dense_inverse(p);
  const Vec e = w - model.w_star;
  const Vec e_next = e - alpha * (minv * (model.hess * e));
  const double noise_var = model.sigma * model.sigma / model.batch;
  const Mat hm = model.hess * minv;
  return 0.5 * e_next.dot(model.hess * e_next) + 0.5 * alpha * alpha * noise_var * trace_product(hm, hm);
}

bool DescentReport::all_pass() const {
  return std::all_of(points.begin(), points.end(), [](const DescentPoint& pt) { return pt.pass; });
}

DescentReport check_descent_lemma(const QuadraticModel& model, const Preconditioner& p,
                                  const std::vector<Vec>& w_samples, double alpha, long n_mc,
                                  std::uint64_t seed) {
  if (n_mc < 10000) throw InputError("check_descent_lemma: need n_mc >= 1e4");
  const TheoryConstants c = constants_for(model, p);
  const double limit = step_limit(c);
  if (!(alpha > 0.0) || alpha > limit * (1.0 + kEdge))
    throw InputError("check_descent_lemma: alpha " + num(alpha) + " violates 0 < alpha <= mu/(L_hat K_G) = " +
                     num(limit));

  const double scale = model.sigma / std::sqrt(static_cast<double>(model.batch));
  DescentReport report;
  report.points.resize(w_samples.size());
  for (std::size_t i = 0; i < w_samples.size(); ++i) {
    const Vec& w = w_samples[i];
    DescentPoint& pt = report.points[i];
    pt.gap = loss(model, w) - model.f_star;
    pt.rhs = (1.0 - alpha * c.c_hat * c.mu) * pt.gap + 0.5 * alpha * alpha * c.l_hat * c.k_noise;
    pt.exact = expected_gap_after_step(model, p, w, alpha);

    const Vec w_det = w - alpha * p.apply_inverse(grad(model, w));
    Rng rng(derive_seed(seed, "descent") + i);
    double mean = 0.0;
    double m2 = 0.0;
    for (long n = 1; n <= n_mc; ++n) {
      Vec w_next = w_det;
      if (scale != 0.0) {
        const Vec zeta = scale * (model.hess_sqrt * standard_normal(model.dim(), rng));
        w_next -= alpha * p.apply_inverse(zeta);
      }
      const double x = loss(model, w_next) - model.f_star;
      const double delta = x - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (x - mean);
    }
    pt.mc_mean = mean;
    pt.mc_se = std::sqrt(m2 / static_cast<double>(n_mc - 1) / static_cast<double>(n_mc));
    pt.pass = pt.mc_mean <= pt.rhs + 3.0 * pt.mc_se;
  }
  return report;
}

BasinResult basin_stability_mc(const QuadraticModel& model, const Preconditioner& p,
                               const BasinSpec& basin, const RunConfig& cfg) {
  cfg.validate();
  basin.validate();
  if (p.dim() != model.dim()) throw InputError("basin_stability_mc: dimension mismatch");
  const Mat metric = metric_of(p);
  const std::size_t n = cfg.seeds.size();

  struct SeedOutcome {
    bool stayed = true;
    double initial_gap = 0.0;
    double final_gap = 0.0;
    double max_step = 0.0;
  };
  std::vector<SeedOutcome> outcomes(n);

  parallel_for(n, cfg.jobs, [&](std::size_t i) {
    const std::uint64_t seed = cfg.seeds[i];
    Rng init(seed, "init");
    Vec w1;
    constexpr int kMaxDraws = 100000;
    int draws = 0;
    do {
      if (++draws > kMaxDraws)
        throw InputError("basin_stability_mc: no start inside N_r after " + std::to_string(kMaxDraws) +
                         " draws; r = " + num(basin.r) + " is too small for init_std = " + num(cfg.init_std));
      w1 = sample_initial_point(model, cfg.init_std, init);
    } while (m_norm(metric, w1 - model.w_star) > basin.r);

    SeedOutcome& out = outcomes[i];
    out.initial_gap = loss(model, w1) - model.f_star;
    Vec prev = w1;
    run_psgd_seed(model, p, cfg, seed, w1, [&](long k, const Vec& w) {
      if (k > 1) out.max_step = std::max(out.max_step, m_norm(metric, w - prev));
      if (m_norm(metric, w - model.w_star) > basin.r) out.stayed = false;
      if (k == cfg.iters + 1) out.final_gap = loss(model, w) - model.f_star;
      prev = w;
    });
  });

  BasinResult res;
  res.seeds = static_cast<long>(n);
  res.horizon = cfg.iters;
  long stayed = 0;
  double cond_sum = 0.0;
  double uncond_sum = 0.0;
  double gap_sum = 0.0;
  double max_step = 0.0;
  for (const auto& o : outcomes) {
    gap_sum += o.initial_gap;
    uncond_sum += o.final_gap;
    max_step = std::max(max_step, o.max_step);
    if (o.stayed) {
      ++stayed;
      cond_sum += o.final_gap;
    }
  }
  const double dn = static_cast<double>(n);
  res.stay_fraction = static_cast<double>(stayed) / dn;
  res.binomial_se = std::sqrt(res.stay_fraction * (1.0 - res.stay_fraction) / dn);
  res.mean_initial_gap = gap_sum / dn;
  res.bound = basin_stability_bound(basin, res.mean_initial_gap);
  res.r_plus = basin.r + max_step;
  res.unconditioned_final_gap = uncond_sum / dn;
  res.conditioned_final_gap =
      stayed > 0 ? cond_sum / static_cast<double>(stayed) : std::numeric_limits<double>::quiet_NaN();
  return res;
}

long basin_horizon(const QuadraticModel& model, const Preconditioner& p, double alpha_bar,
                   double init_cov_scale, long cap) {
  if (cap < 1) throw InputError("basin_horizon: cap must be >= 1");
  const Index d = model.dim();
  const Mat& h = model.hess;
  const Mat minv = dense_inverse(p);
  const Mat eye = Mat::Identity(d, d);
  const Mat a = eye - alpha_bar * (minv * h);
  const double noise_var = model.sigma * model.sigma / model.batch;
  const Mat q = (alpha_bar * alpha_bar * noise_var) * (minv * h * minv);
  const double floor = 0.5 * trace_product(h, stationary_covariance(a, q, h));

  Mat cov = init_cov_scale * eye;
  const double gap1 = 0.5 * trace_product(h, cov);
  const long limit = cap / 10 + 1;
  for (long k = 1; k <= limit; ++k) {
    const double gap = 0.5 * trace_product(h, cov);
    const bool settled = floor > 0.0 ? std::abs(gap - floor) <= 0.01 * floor : gap <= 1e-4 * gap1;
    if (settled) return std::min(cap, 10 * k);
    cov = a * cov * a.transpose() + q;
  }
  return cap;
}

}  // namespace psgd
