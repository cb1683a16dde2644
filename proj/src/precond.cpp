#include "psgd/precond.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "psgd/quadratic.hpp"

namespace psgd {

std::string_view to_string(PreconditionerKind kind) {
  switch (kind) {
    case PreconditionerKind::Identity: return "identity";
    case PreconditionerKind::SpectralDeflation: return "spectral-deflation";
    case PreconditionerKind::Diagonal: return "diagonal";
    case PreconditionerKind::CurvatureCG: return "curvature-cg";
    case PreconditionerKind::LbfgsMemory: return "lbfgs";
  }
  return "unknown";
}

Mat dense_inverse(const Preconditioner& p) {
  const Index d = p.dim();
  Mat out(d, d);
  for (Index j = 0; j < d; ++j) out.col(j) = p.apply_inverse(Vec::Unit(d, j));
  return 0.5 * (out + out.transpose());
}

double m_norm(const Mat& metric, const Vec& x) { return std::sqrt(x.dot(metric * x)); }

std::string DeflationSpec::label() const {
  std::ostringstream os;
  switch (mode) {
    case DeflationMode::TopToOne: os << "top_to_one_s" << s; break;
    case DeflationMode::TopToCommon: os << "top_to_common_s" << s << "_v" << v; break;
    case DeflationMode::BottomToOne: os << "bottom_to_one_s" << s; break;
  }
  return os.str();
}

SpectralDeflation::SpectralDeflation(Mat basis, Vec tau) : basis_(std::move(basis)), tau_(std::move(tau)) {
  if (basis_.cols() != tau_.size()) throw InputError("deflation: basis/tau size mismatch");
  if (!(tau_.array() > 0.0).all() || !tau_.allFinite())
    throw InputError("deflation: target values tau must be positive and finite");
}

Vec SpectralDeflation::apply_inverse(const Vec& v) const {
  const Vec coeff = basis_.transpose() * v;
  return v + basis_ * (tau_.cwiseInverse().array() - 1.0).matrix().cwiseProduct(coeff);
}

Vec SpectralDeflation::apply(const Vec& v) const {
  const Vec coeff = basis_.transpose() * v;
  return v + basis_ * (tau_.array() - 1.0).matrix().cwiseProduct(coeff);
}

std::optional<Mat> SpectralDeflation::materialize() const {
  const Index d = basis_.rows();
  Mat m = Mat::Identity(d, d) +
          basis_ * (tau_.array() - 1.0).matrix().asDiagonal() * basis_.transpose();
  return Mat(0.5 * (m + m.transpose()));
}

std::optional<Vec> SpectralDeflation::closed_form_spectrum(std::uint64_t model_fingerprint) const {
  if (!model_fingerprint_ || *model_fingerprint_ != model_fingerprint) return std::nullopt;
  return preconditioned_spectrum_;
}

SpectralDeflation build_deflation(const QuadraticModel& model, const DeflationSpec& spec) {
  const Index d = model.dim();
  const Vec& lambda = model.hess_eig.eigenvalues;
  if (spec.s < 1 || spec.s > d) {
    throw InputError("deflation: s = " + std::to_string(spec.s) + " outside [1, " +
                     std::to_string(d) + "]");
  }
  const Index s = spec.s;

  Index first = 0;
  double target = 1.0;
  switch (spec.mode) {
    case DeflationMode::TopToOne:
      break;
    case DeflationMode::TopToCommon: {
      const double lo = lambda[d - 1];
      const double hi = s < d ? lambda[s] : std::numeric_limits<double>::infinity();
      if (!(spec.v >= lo && spec.v <= hi)) {
        std::ostringstream os;
        os << "deflation: common target v = " << spec.v << " outside [lambda_d, lambda_{s+1}] = ["
           << lo << ", " << hi << "]";
        throw InputError(os.str());
      }
      target = spec.v;
      break;
    }
    case DeflationMode::BottomToOne:
      first = d - s;
      break;
  }

  Mat basis = model.hess_eig.eigenvectors.middleCols(first, s);
  Vec tau(s);
  for (Index i = 0; i < s; ++i) tau[i] = lambda[first + i] / target;

  SpectralDeflation p(std::move(basis), std::move(tau));
  p.model_fingerprint_ = model.fingerprint;
  p.preconditioned_spectrum_ = lambda;
  p.preconditioned_spectrum_.segment(first, s).setConstant(target);
  return p;
}

DiagonalPreconditioner::DiagonalPreconditioner(Vec diagonal) : diagonal_(std::move(diagonal)) {
  if (!diagonal_.allFinite() || !(diagonal_.array() > 0.0).all())
    throw InputError("diagonal preconditioner: entries must be positive and finite");
}

DiagonalPreconditioner DiagonalPreconditioner::from_moments(const Vec& second_moments, double eps) {
  if (!(eps > 0.0)) throw InputError("diagonal preconditioner: eps must be > 0");
  if (!second_moments.allFinite() || (second_moments.array() < 0.0).any())
    throw InputError("diagonal preconditioner: second-moment estimates must be >= 0");
  return DiagonalPreconditioner((second_moments.cwiseSqrt().array() + eps).matrix());
}

LbfgsMemory::LbfgsMemory(Index dim, int capacity) : dim_(dim), capacity_(capacity) {
  if (capacity < 1) throw InputError("lbfgs: memory capacity must be >= 1");
}

bool LbfgsMemory::push(const Vec& s, const Vec& y) {
  if (s.size() != dim_ || y.size() != dim_) throw InputError("lbfgs: pair dimension mismatch");
  const double sy = s.dot(y);
  if (!(sy > 0.0) || !std::isfinite(sy) || !(y.squaredNorm() > 0.0)) return false;
  if (static_cast<int>(pairs_.size()) == capacity_) pairs_.pop_front();
  pairs_.push_back({s, y, 1.0 / sy});
  return true;
}

Vec LbfgsMemory::apply_inverse(const Vec& g) const {
  if (pairs_.empty()) return g;
  Vec q = g;
  std::vector<double> alpha(pairs_.size());
  for (std::size_t i = pairs_.size(); i-- > 0;) {
    const Pair& pr = pairs_[i];
    alpha[i] = pr.rho * pr.s.dot(q);
    q -= alpha[i] * pr.y;
  }
  const Pair& newest = pairs_.back();
  Vec r = (1.0 / (newest.rho * newest.y.squaredNorm())) * q;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const Pair& pr = pairs_[i];
    const double beta = pr.rho * pr.y.dot(r);
    r += (alpha[i] - beta) * pr.s;
  }
  return r;
}

Vec lbfgs_direction(const LbfgsMemory& memory, const Vec& g) { return -memory.apply_inverse(g); }

CurvatureCgPreconditioner::CurvatureCgPreconditioner(Index dim, LinearOperator curvature, CgConfig cfg)
    : dim_(dim), curvature_(std::move(curvature)), cfg_(cfg) {
  cfg_.validate();
}

Vec CurvatureCgPreconditioner::apply_inverse(const Vec& g) const {
  return curvature_cg_precondition(curvature_, g, cfg_);
}

Vec curvature_cg_precondition(const LinearOperator& apply_curvature, const Vec& g, const CgConfig& cfg) {
  try {
    return cg_solve(apply_curvature, g, cfg).x;
  } catch (const NumericalError& e) {
    throw NumericalError("curvature-CG preconditioner (damping " + std::to_string(cfg.damping) +
                             ", budget " + std::to_string(cfg.max_iters) + "): " + e.detail(),
                         e.iteration());
  }
}

}  // namespace psgd
