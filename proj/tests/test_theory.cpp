#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "helpers.hpp"
#include "psgd/theory.hpp"

using namespace psgd;

namespace {

TheoryConstants make_constants(double l_hat, double c_hat, double k) {
  TheoryConstants c;
  c.l_hat = l_hat;
  c.c_hat = c_hat;
  c.k_noise = k;
  c.kappa_eff = l_hat / c_hat;
  return c;
}

bool message_has(const std::function<void()>& f, const std::string& needle) {
  try {
    f();
  } catch (const InputError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

// Expected gaps of a deflation-preconditioned run, mode by mode in the
// eigenbasis of H, where M, H and the noise covariance are simultaneously
// diagonal. metric[i] is the eigenvalue of M along u_i.
std::vector<double> modal_gaps(const QuadraticModel& m, const Vec& metric, const Schedule& sched,
                               double init_cov, long k_max) {
  const Index d = m.dim();
  const double s = m.sigma * m.sigma / m.batch;
  Vec x(d);
  Vec lam_hat(d);
  for (Index i = 0; i < d; ++i) {
    lam_hat[i] = m.hess_eig.eigenvalues[i] / metric[i];
    x[i] = init_cov * metric[i];
  }
  std::vector<double> gaps;
  for (long k = 1; k <= k_max; ++k) {
    gaps.push_back(0.5 * lam_hat.dot(x));
    const double a = sched.at(k);
    for (Index i = 0; i < d; ++i) {
      const double r = 1.0 - a * lam_hat[i];
      x[i] = r * r * x[i] + a * a * s * lam_hat[i];
    }
  }
  return gaps;
}

Vec deflation_metric(const SpectralDeflation& p, const QuadraticModel& m) {
  // Eigenvalue of M along each eigenvector of H.
  Vec out(m.dim());
  for (Index i = 0; i < m.dim(); ++i) {
    const Vec u = m.hess_eig.eigenvectors.col(i);
    out[i] = u.dot(p.apply(u));
  }
  return out;
}

}  // namespace

TEST_CASE("fixed-rate bound") {
  const TheoryConstants c = make_constants(1.0, 1.0, 2.0);
  CHECK(bound_fixed(c, 0.5, 10.0, 1) == 10.0);
  CHECK(bound_fixed(c, 0.5, 10.0, 2) == doctest::Approx(5.25).epsilon(1e-15));
  const FixedRateBound b = fixed_rate_bound(c, 0.5, 10.0);
  CHECK(b.floor_c == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(b.at(100000) - b.floor_c) < 1e-12);
  CHECK(b.contraction > 0.0);
  CHECK(b.contraction < 1.0);

  const TheoryConstants d = make_constants(4.0, 0.5, 1.0);
  CHECK(message_has([&] { bound_fixed(d, 0.3, 1.0, 1); }, "mu/(L_hat K_G)"));
  CHECK_THROWS_AS(bound_fixed(d, 0.1, -1.0, 1), InputError);
  CHECK_THROWS_AS(bound_fixed(d, 0.1, 1.0, 0), InputError);
}

TEST_CASE("diminishing bound") {
  const TheoryConstants c = make_constants(1.0, 1.0, 1.0);
  CHECK(harmonic_nu(c, 2.0, 3.0, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(bound_diminishing(c, 2.0, 3.0, 0.0, 7) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(bound_diminishing(c, 2.0, 3.0, 5.0, 1) >= 5.0);
  const double r = bound_diminishing(c, 2.0, 3.0, 0.0, 1000000) / bound_diminishing(c, 2.0, 3.0, 0.0, 100000);
  CHECK(r == doctest::Approx(0.1).epsilon(1e-4));

  CHECK(message_has([&] { bound_diminishing(c, 0.9, 3.0, 0.0, 1); }, "beta > 1/(c_hat mu)"));
  CHECK(message_has([&] { bound_diminishing(c, 2.0, 0.5, 0.0, 1); }, "alpha_1"));
  CHECK(message_has([&] { bound_diminishing(c, 2.0, 0.0, 0.0, 1); }, "gamma > 0"));
}

TEST_CASE("local fixed-rate bound") {
  const QuadraticModel m = make_diagnostic_model(10, 1.0, 10.0, 3, 0.1, 1);
  const IdentityPreconditioner id(10);
  const TheoryConstants c = constants_for(m, id);
  const BasinSpec basin = quadratic_basin(c, 100.0, 200.0);
  const double alpha = 0.05;
  for (long k : {1L, 2L, 10L, 1000L}) {
    const LocalFixedBound lb = bound_local_fixed(c, basin, alpha, 0.3, k);
    CHECK(lb.bound == doctest::Approx(bound_fixed(c, alpha, 0.3, k)).epsilon(1e-14));
  }
  CHECK(bound_local_fixed(c, basin, alpha, 0.3, 1).bound == 0.3);

  const TheoryConstants u = make_constants(1.0, 1.0, 0.01);
  const BasinSpec b{1.0, 2.0, 0.5, 0.5};
  CHECK(bound_local_fixed(u, b, 0.2, 1.0, 3).rho == doctest::Approx(0.1).epsilon(1e-15));

  CHECK(message_has([&] { bound_local_fixed(make_constants(10.0, 0.5, 0.01), b, 0.2, 1.0, 1); },
                    "mu/(L_hat K_G)"));
  CHECK(message_has([&] { bound_local_fixed(make_constants(1.0, 0.5, 100.0), b, 0.2, 1.0, 1); },
                    "alpha_QG mu_PL mu r^2/(L_hat K)"));
  const BasinSpec steep{1.0, 2.0, 100.0, 50.0};
  CHECK(message_has([&] { bound_local_fixed(make_constants(1.0, 0.5, 0.01), steep, 0.2, 1.0, 1); },
                    "1/(mu mu_PL)"));
}

TEST_CASE("basin stability bound") {
  const BasinSpec b{1.0, 2.0, 2.0, 1.0};
  CHECK(basin_stability_bound(b, 0.0) == 1.0);
  CHECK(basin_stability_bound(b, 1.0) == 0.0);
  CHECK(basin_stability_bound(b, 5.0) == 0.0);
  CHECK(basin_stability_bound(b, 0.25) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(basin_stability_bound(BasinSpec{1.0, 0.5, 1.0, 1.0}, 0.1), InputError);
}

TEST_CASE("local diminishing bound") {
  const TheoryConstants c = make_constants(2.0, 1.0, 1.0);
  const BasinSpec b{1.0, 2.0, 1.0, 1.0};
  CHECK(bound_local_diminishing(c, b, 3.0, 5.0, 0.0, 4) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(bound_local_diminishing(c, b, 3.0, 5.0, 2.0, 1) >= 2.0);
  // Same beta admitted by both windows.
  CHECK(bound_local_diminishing(c, b, 3.0, 5.0, 0.1, 9) ==
        doctest::Approx(bound_diminishing(c, 3.0, 5.0, 0.1, 9)).epsilon(1e-15));
  CHECK(message_has([&] { bound_local_diminishing(c, b, 1.5, 5.0, 0.0, 1); }, "2/(mu_PL mu)"));
  CHECK(message_has([&] { bound_local_diminishing(c, b, 3.5, 5.0, 0.0, 1); }, "mu(gamma+1)/(L_hat K_G)"));
}

TEST_CASE("exact recursion: noiseless case matches gradient descent") {
  const QuadraticModel m = make_diagnostic_model(8, 0.1, 10.0, 5, 0.0, 1);
  const IdentityPreconditioner id(8);
  const double alpha = 0.15;
  const double scale = 0.04;
  const LossRecursion r = exact_loss_recursion(m, id, alpha, scale, 60);
  REQUIRE(r.gaps.size() == 60);
  CHECK(r.gaps[0] == doctest::Approx(0.5 * scale * m.hess.trace()).epsilon(1e-14));
  CHECK(r.stationary_floor == 0.0);

  // E gap_k = scale * sum_j gap_k(start = e_j) for w_1 ~ N(0, scale I).
  std::vector<double> gd(60, 0.0);
  for (Index j = 0; j < 8; ++j) {
    Vec w = Vec::Unit(8, j);
    for (int k = 0; k < 60; ++k) {
      gd[k] += scale * loss(m, w);
      w = psgd_step(w, grad(m, w), alpha, id);
    }
  }
  for (int k = 0; k < 60; ++k) CHECK(r.gaps[k] == doctest::Approx(gd[k]).epsilon(1e-12));
}

TEST_CASE("exact recursion agrees with the modal closed form") {
  const QuadraticModel m = make_diagnostic_model(12, 1e-2, 1e2, 9, 0.2, 2);
  for (const DeflationSpec& spec :
       {DeflationSpec::top_to_one(4), DeflationSpec::top_to_common(6, 0.5), DeflationSpec::bottom_to_one(3)}) {
    const SpectralDeflation p = build_deflation(m, spec);
    const Vec metric = deflation_metric(p, m);
    const TheoryConstants c = constants_for(m, p);

    const Schedule fixed = Schedule::fixed(0.7 / c.l_hat);
    const LossRecursion r = exact_loss_recursion(m, p, fixed, 1e-3, 401, 20);
    const auto modal = modal_gaps(m, metric, fixed, 1e-3, 401);
    for (std::size_t j = 0; j < r.ks.size(); ++j)
      CHECK(r.gaps[j] == doctest::Approx(modal[r.ks[j] - 1]).epsilon(1e-10));

    double floor = 0.0;
    const double s = m.sigma * m.sigma / m.batch;
    for (Index i = 0; i < 12; ++i) {
      const double lh = m.hess_eig.eigenvalues[i] / metric[i];
      floor += 0.5 * fixed.alpha_bar * s * lh / (2.0 - fixed.alpha_bar * lh);
    }
    CHECK(r.stationary_floor == doctest::Approx(floor).epsilon(1e-9));

    const Schedule harmonic = Schedule::harmonic(3.0 / c.c_hat, 3.0 * c.l_hat / c.c_hat);
    const LossRecursion h = exact_loss_recursion(m, p, harmonic, 1e-3, 300, 7);
    const auto hm = modal_gaps(m, metric, harmonic, 1e-3, 300);
    for (std::size_t j = 0; j < h.ks.size(); ++j)
      CHECK(h.gaps[j] == doctest::Approx(hm[h.ks[j] - 1]).epsilon(1e-10));
  }
}

TEST_CASE("exact recursion: strides agree and unstable rates throw") {
  const QuadraticModel m = make_diagnostic_model(10, 1e-2, 1e2, 4, 0.1, 1);
  const IdentityPreconditioner id(10);
  const double alpha = 0.5 / m.lambda_max();
  const LossRecursion every = exact_loss_recursion(m, id, alpha, 1e-4, 1000);
  const LossRecursion strided = exact_loss_recursion(m, id, Schedule::fixed(alpha), 1e-4, 1000, 37);
  for (std::size_t j = 0; j < strided.ks.size(); ++j)
    CHECK(strided.gaps[j] == doctest::Approx(every.gaps[strided.ks[j] - 1]).epsilon(1e-12));
  CHECK_THROWS_AS(exact_loss_recursion(m, id, 2.01 / m.lambda_max(), 1e-4, 10), DivergenceError);
}

TEST_CASE("stationary floor never exceeds the fixed-rate floor") {
  const QuadraticModel m = make_diagnostic_model(20, 1e-2, 1e2, 7, 0.1, 1);
  std::vector<std::shared_ptr<Preconditioner>> ps{
      std::make_shared<IdentityPreconditioner>(20),
      std::make_shared<SpectralDeflation>(build_deflation(m, DeflationSpec::top_to_one(5))),
      std::make_shared<SpectralDeflation>(build_deflation(m, DeflationSpec::top_to_common(20, 5.0))),
      std::make_shared<SpectralDeflation>(build_deflation(m, DeflationSpec::bottom_to_one(5))),
  };
  for (const auto& p : ps) {
    const TheoryConstants c = constants_for(m, *p);
    for (double frac : {0.1, 0.5, 1.0}) {
      const double alpha = frac * c.mu / (c.l_hat * c.k_g);
      const LossRecursion r = exact_loss_recursion(m, *p, Schedule::fixed(alpha), 1e-4, 1, 1);
      CHECK(r.stationary_floor <= fixed_rate_bound(c, alpha, 1.0).floor_c * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("stationary covariance solves the Lyapunov equation") {
  Rng rng(3);
  const Mat h = psgd::test::random_spd(6, rng);
  const Mat a = Mat::Identity(6, 6) - (0.3 / h.norm()) * h;
  const Mat q = 0.01 * h;
  const Mat x = stationary_covariance(a, q, h);
  CHECK((a * x * a.transpose() + q - x).norm() <= 1e-10 * x.norm());
}

TEST_CASE("descent lemma") {
  const QuadraticModel quiet = make_diagnostic_model(10, 1e-2, 1e2, 1, 0.0, 1);
  const IdentityPreconditioner id(10);
  Rng rng(4);
  std::vector<Vec> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(standard_normal(10, rng));
  const DescentReport q = check_descent_lemma(quiet, id, pts, 1.0 / quiet.lambda_max(), 10000, 1);
  CHECK(q.all_pass());
  for (const auto& p : q.points) {
    CHECK(p.mc_mean == doctest::Approx(p.exact).epsilon(1e-12));
    CHECK(p.exact <= p.rhs);
  }

  const QuadraticModel m = make_diagnostic_model(10, 1e-2, 1e2, 1, 0.1, 1);
  const DescentReport r = check_descent_lemma(m, id, pts, 0.5 / m.lambda_max(), 10000, 2);
  CHECK(r.all_pass());
  for (const auto& p : r.points) CHECK(std::abs(p.mc_mean - p.exact) <= 3.0 * p.mc_se);

  CHECK_THROWS_AS(check_descent_lemma(m, id, pts, 0.5 / m.lambda_max(), 100, 2), InputError);
  CHECK_THROWS_AS(check_descent_lemma(m, id, pts, 2.0 / m.lambda_max(), 10000, 2), InputError);
}

TEST_CASE("expected one-step gap") {
  const QuadraticModel m = make_diagnostic_model(5, 0.5, 5.0, 2, 0.3, 1);
  const IdentityPreconditioner id(5);
  const Vec w = Vec::Ones(5);
  const double alpha = 0.1;
  const Vec det = psgd_step(w, grad(m, w), alpha, id);
  // E = gap(deterministic step) + alpha^2 / 2 tr(H Sigma) with Sigma = sigma^2 H.
  const double expected = loss(m, det) + 0.5 * alpha * alpha * 0.09 * (m.hess * m.hess).trace();
  CHECK(expected_gap_after_step(m, id, w, alpha) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("basin stability Monte Carlo") {
  const IdentityPreconditioner id(10);
  RunConfig cfg;
  cfg.seeds.resize(200);
  std::iota(cfg.seeds.begin(), cfg.seeds.end(), 1);
  cfg.init_std = 0.1;

  for (double sigma : {0.0, 0.1, 0.3}) {
    const QuadraticModel m = make_diagnostic_model(10, 1.0, 10.0, 3, sigma, 1);
    const TheoryConstants c = constants_for(m, id);
    const double gap_ref = 0.5 * cfg.init_std * cfg.init_std * m.hess.trace();
    const double r_ref = std::sqrt(2.0 * gap_ref / c.c_hat);
    for (double rm : {0.5, 1.0, 2.0}) {
      const BasinSpec basin = quadratic_basin(c, rm * r_ref, 2.0 * rm * r_ref);
      const double alpha = 0.5 * local_alpha_limit(c, basin);
      cfg.schedule = Schedule::fixed(alpha);
      cfg.iters = basin_horizon(m, id, alpha, cfg.init_std * cfg.init_std, 5000);
      cfg.record_every = cfg.iters;
      const BasinResult res = basin_stability_mc(m, id, basin, cfg);
      CHECK(res.stay_fraction >= res.bound - 2.0 * res.binomial_se);
      if (sigma == 0.0) CHECK(res.stay_fraction == 1.0);
      CHECK(res.r_plus >= basin.r);
    }
  }

  const QuadraticModel m = make_diagnostic_model(10, 1.0, 10.0, 3, 0.1, 1);
  const TheoryConstants c = constants_for(m, id);
  const BasinSpec wide = quadratic_basin(c, 1e6, 2e6);
  cfg.schedule = Schedule::fixed(0.5 * local_alpha_limit(c, wide));
  cfg.iters = 500;
  cfg.record_every = 500;
  const BasinResult res = basin_stability_mc(m, id, wide, cfg);
  CHECK(res.stay_fraction == 1.0);
  CHECK(res.bound > 1.0 - 1e-9);
}
