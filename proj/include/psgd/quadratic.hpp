#pragma once

#include <cstdint>
#include <optional>

#include "psgd/linalg.hpp"
#include "psgd/precond.hpp"
#include "psgd/rng.hpp"

namespace psgd {

/// F(w) = 1/2 (w - w*)^T H (w - w*) + F*, with synthetic mini-batch
/// gradients g = grad F(w) + zeta, zeta ~ N(0, (sigma^2 / B) H).
///
/// Immutable after construction. H, H^{1/2} and the eigendecomposition are
/// kept together so sampling and analysis never re-factor.
struct QuadraticModel {
  SymEig hess_eig;
  Mat hess;
  Mat hess_sqrt;
  Vec w_star;
  double f_star = 0.0;
  double sigma = 0.0;
  int batch = 1;
  /// Identifies hess_eig; preconditioners built from this model carry it.
  std::uint64_t fingerprint = 0;

  Index dim() const { return hess.rows(); }
  double lambda_max() const { return hess_eig.eigenvalues[0]; }
  double lambda_min() const { return hess_eig.eigenvalues[hess_eig.dim() - 1]; }
};

/// Model with the given eigenpairs. Eigenvalues must be positive and sorted
/// descending; eigenvectors orthonormal.
QuadraticModel make_quadratic_model(SymEig hess_eig, Vec w_star, double f_star, double sigma,
                                    int batch);

/// Log-uniform eigenvalue grid, descending, from lambda_max to lambda_min.
Vec log_uniform_spectrum(Index d, double lambda_min, double lambda_max);

/// Diagnostic model: log-uniform spectrum, Haar eigenvectors, w* = 0, F* = 0.
QuadraticModel make_diagnostic_model(Index d, double lambda_min, double lambda_max,
                                     std::uint64_t seed, double sigma, int batch);

double loss(const QuadraticModel& model, const Vec& w);
Vec grad(const QuadraticModel& model, const Vec& w);
/// zeta = (sigma / sqrt(B)) H^{1/2} z with z standard normal.
Vec sample_noise(const QuadraticModel& model, Rng& rng);
Vec sample_stochastic_grad(const QuadraticModel& model, const Vec& w, Rng& rng);

/// Constants of the M-metric analysis.
struct TheoryConstants {
  double l_hat = 0.0;      ///< lambda_max(M^{-1} H)
  double c_hat = 0.0;      ///< lambda_min(M^{-1} H); also the PL constant
  double mu = 1.0;
  double mu_g = 1.0;
  double k_noise = 0.0;    ///< (sigma^2 / B) tr(M^{-1} H)
  double k_v = 0.0;
  double k_g = 1.0;        ///< K_V + mu_G^2
  double kappa_eff = 0.0;  ///< l_hat / c_hat

  double mu_pl() const { return c_hat; }
};

/// Closed-form constants for the synthetic-gradient quadratic. The additive
/// unbiased noise gives mu = mu_G = 1, K_V = 0, K_G = 1.
///
/// Spectral preconditioners built from this model use their closed-form
/// preconditioned spectrum; every other preconditioner goes through the
/// symmetrized form P^T H P with M^{-1} = P P^T. Throws InputError when M is
/// not SPD or has the wrong dimension.
TheoryConstants constants_for(const QuadraticModel& model, const Preconditioner& p);

/// Eigenvalues of M^{-1} H (descending), by the dense symmetrized route.
Vec preconditioned_spectrum(const QuadraticModel& model, const Preconditioner& p);

struct NoiseMoments {
  /// <grad F, E g>_{M^-1} / ||grad F||^2_{M^-1}; empty at a stationary point.
  std::optional<double> mu;
  /// ||E g||_{M^-1} / ||grad F||_{M^-1}; empty at a stationary point.
  std::optional<double> mu_g;
  /// Monte Carlo variance of g in the M^{-1} norm.
  double k = 0.0;
  /// Standard error of the mu estimate (0 when mu is empty).
  double mu_se = 0.0;
  bool degenerate = false;
};

/// Monte Carlo estimates of the moment constants at one point w.
NoiseMoments estimate_noise_moments(const QuadraticModel& model, const Preconditioner& p,
                                    const Vec& w, long n_samples, std::uint64_t seed);

}  // namespace psgd
