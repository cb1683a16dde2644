#include "psgd/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace psgd {

namespace {

std::uint64_t fnv1a(const double* data, std::size_t count, std::uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_dim(const QuadraticModel& model, const Vec& w, const char* what) {
  if (w.size() != model.dim()) {
    throw InputError(std::string(what) + ": vector has dimension " + std::to_string(w.size()) +
                     ", model has " + std::to_string(model.dim()));
  }
}

}  // namespace

QuadraticModel make_quadratic_model(SymEig hess_eig, Vec w_star, double f_star, double sigma,
                                    int batch) {
  const Index d = hess_eig.dim();
  if (d < 1 || hess_eig.eigenvectors.rows() != d || hess_eig.eigenvectors.cols() != d)
    throw InputError("quadratic model: eigendecomposition has inconsistent shape");
  if (w_star.size() != d) throw InputError("quadratic model: w_star dimension mismatch");
  if (!(hess_eig.eigenvalues.array() > 0.0).all())
    throw InputError("quadratic model: Hessian eigenvalues must be positive");
  for (Index i = 1; i < d; ++i) {
    if (hess_eig.eigenvalues[i] > hess_eig.eigenvalues[i - 1])
      throw InputError("quadratic model: eigenvalues must be sorted descending");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InputError("quadratic model: sigma must be >= 0");
  if (batch < 1) throw InputError("quadratic model: batch must be >= 1");

  QuadraticModel m;
  m.hess = hess_eig.reconstruct();
  m.hess = 0.5 * (m.hess + m.hess.transpose()).eval();
  m.hess_sqrt = hess_eig.reconstruct(hess_eig.eigenvalues.cwiseSqrt());
  m.hess_eig = std::move(hess_eig);
  m.w_star = std::move(w_star);
  m.f_star = f_star;
  m.sigma = sigma;
  m.batch = batch;

  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(m.hess_eig.eigenvalues.data(), static_cast<std::size_t>(d), h);
  h = fnv1a(m.hess_eig.eigenvectors.data(), static_cast<std::size_t>(d * d), h);
  m.fingerprint = h;
  return m;
}

Vec log_uniform_spectrum(Index d, double lambda_min, double lambda_max) {
  if (d < 2) throw InputError("log-uniform spectrum: need d >= 2");
  if (!(lambda_min > 0.0) || !(lambda_min < lambda_max) || !std::isfinite(lambda_max)) {
    throw InputError("log-uniform spectrum: need 0 < lambda_min < lambda_max, got [" +
                     std::to_string(lambda_min) + ", " + std::to_string(lambda_max) + "]");
  }
  Vec lambda(d);
  const double log_ratio = std::log(lambda_min / lambda_max);
  for (Index i = 0; i < d; ++i) {
    lambda[i] = lambda_max * std::exp(log_ratio * static_cast<double>(i) / static_cast<double>(d - 1));
  }
  lambda[0] = lambda_max;
  lambda[d - 1] = lambda_min;
  return lambda;
}

QuadraticModel make_diagnostic_model(Index d, double lambda_min, double lambda_max,
                                     std::uint64_t seed, double sigma, int batch) {
  SymEig eig{log_uniform_spectrum(d, lambda_min, lambda_max), haar_orthogonal(d, seed)};
  return make_quadratic_model(std::move(eig), Vec::Zero(d), 0.0, sigma, batch);
}

double loss(const QuadraticModel& model, const Vec& w) {
  check_dim(model, w, "loss");
  const Vec e = w - model.w_star;
  return 0.5 * e.dot(model.hess * e) + model.f_star;
}

Vec grad(const QuadraticModel& model, const Vec& w) {
  check_dim(model, w, "grad");
  return model.hess * (w - model.w_star);
}

Vec sample_noise(const QuadraticModel& model, Rng& rng) {
  const Vec z = standard_normal(model.dim(), rng);
  return (model.sigma / std::sqrt(static_cast<double>(model.batch))) * (model.hess_sqrt * z);
}

Vec sample_stochastic_grad(const QuadraticModel& model, const Vec& w, Rng& rng) {
  Vec g = grad(model, w);
  if (model.sigma == 0.0) return g;
  g += sample_noise(model, rng);
  return g;
}

Vec preconditioned_spectrum(const QuadraticModel& model, const Preconditioner& p) {
  if (p.dim() != model.dim()) throw InputError("preconditioner dimension does not match model");
  const Mat minv = dense_inverse(p);
  if (!minv.allFinite()) throw InputError("preconditioner inverse has non-finite entries");
  const SymEig minv_eig = eig_spd(minv);
  const double smallest = minv_eig.eigenvalues[minv_eig.dim() - 1];
  if (!(smallest > 0.0)) throw InputError("preconditioner is not SPD");
  const Mat half = minv_eig.reconstruct(minv_eig.eigenvalues.cwiseSqrt());
  return eig_spd(half * model.hess * half).eigenvalues;
}

TheoryConstants constants_for(const QuadraticModel& model, const Preconditioner& p) {
  if (p.dim() != model.dim()) throw InputError("preconditioner dimension does not match model");

  Vec spectrum;
  if (p.kind() == PreconditionerKind::Identity) {
    spectrum = model.hess_eig.eigenvalues;
  } else if (auto closed = p.closed_form_spectrum(model.fingerprint)) {
    spectrum = std::move(*closed);
  } else {
    spectrum = preconditioned_spectrum(model, p);
  }

  TheoryConstants c;
  c.l_hat = spectrum.maxCoeff();
  c.c_hat = spectrum.minCoeff();
  if (!(c.c_hat > 0.0)) throw InputError("M^{-1} H is not positive definite");
  c.mu = 1.0;
  c.mu_g = 1.0;
  c.k_v = 0.0;
  c.k_g = c.k_v + c.mu_g * c.mu_g;
  c.k_noise = model.sigma * model.sigma / model.batch * spectrum.sum();
  c.kappa_eff = c.l_hat / c.c_hat;
  return c;
}

NoiseMoments estimate_noise_moments(const QuadraticModel& model, const Preconditioner& p,
                                    const Vec& w, long n_samples, std::uint64_t seed) {
  check_dim(model, w, "estimate_noise_moments");
  if (n_samples < 1000) throw InputError("estimate_noise_moments: need n_samples >= 1000");

  Rng rng(seed, "moments");
  const Vec g_true = grad(model, w);
  const Vec pg_true = p.apply_inverse(g_true);
  const double grad_norm2 = g_true.dot(pg_true);

  NoiseMoments out;
  if (!(grad_norm2 > 0.0)) out.degenerate = true;
  if (model.sigma == 0.0) {
    // Deterministic gradient: the moments are exact.
    if (!out.degenerate) {
      out.mu = 1.0;
      out.mu_g = 1.0;
    }
    return out;
  }

  const Index d = model.dim();
  Vec sum = Vec::Zero(d);
  double sum_sq_norm = 0.0;
  double proj_sum = 0.0;
  double proj_sum_sq = 0.0;
  for (long i = 0; i < n_samples; ++i) {
    const Vec g = sample_stochastic_grad(model, w, rng);
    const Vec pg = p.apply_inverse(g);
    sum += g;
    sum_sq_norm += g.dot(pg);
    const double proj = g_true.dot(pg);
    proj_sum += proj;
    proj_sum_sq += proj * proj;
  }
  const double n = static_cast<double>(n_samples);
  const Vec mean = sum / n;
  const double mean_norm2 = mean.dot(p.apply_inverse(mean));

  out.k = sum_sq_norm / n - mean_norm2;
  if (out.degenerate) return out;
  const double proj_mean = proj_sum / n;
  const double proj_var = std::max(0.0, proj_sum_sq / n - proj_mean * proj_mean);
  out.mu = proj_mean / grad_norm2;
  out.mu_g = std::sqrt(mean_norm2 / grad_norm2);
  out.mu_se = std::sqrt(proj_var / n) / grad_norm2;
  return out;
}

}  // namespace psgd
