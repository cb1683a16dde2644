#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>

#include "psgd/linalg.hpp"

namespace psgd {

struct QuadraticModel;

enum class PreconditionerKind { Identity, SpectralDeflation, Diagonal, CurvatureCG, LbfgsMemory };

std::string_view to_string(PreconditionerKind kind);

/// SPD metric M, exposed through the action of its inverse. The update
/// direction of preconditioned SGD is -M^{-1} g.
class Preconditioner {
 public:
  virtual ~Preconditioner() = default;

  virtual PreconditionerKind kind() const = 0;
  virtual Index dim() const = 0;
  /// M^{-1} v.
  virtual Vec apply_inverse(const Vec& v) const = 0;
  /// Dense M, for kinds where it is cheap to form. Analysis and test
  /// oracles use this; the iteration itself never does.
  virtual std::optional<Mat> materialize() const { return std::nullopt; }
  /// Spectrum of M^{-1} H in closed form when the preconditioner was built
  /// from the eigenbasis of the model identified by `model_fingerprint`.
  virtual std::optional<Vec> closed_form_spectrum(std::uint64_t /*model_fingerprint*/) const {
    return std::nullopt;
  }
};

/// Dense M^{-1} assembled column by column from apply_inverse and
/// symmetrized.
Mat dense_inverse(const Preconditioner& p);

/// ||x||_M = sqrt(x^T M x).
double m_norm(const Mat& metric, const Vec& x);

class IdentityPreconditioner final : public Preconditioner {
 public:
  explicit IdentityPreconditioner(Index dim) : dim_(dim) {}

  PreconditionerKind kind() const override { return PreconditionerKind::Identity; }
  Index dim() const override { return dim_; }
  Vec apply_inverse(const Vec& v) const override { return v; }
  std::optional<Mat> materialize() const override { return Mat::Identity(dim_, dim_); }

 private:
  Index dim_;
};

enum class DeflationMode { TopToOne, TopToCommon, BottomToOne };

/// Which eigendirections of H to deflate and where to send them.
///  - TopToOne(s): top s directions get preconditioned eigenvalue 1.
///  - TopToCommon(s, v): top s directions get preconditioned eigenvalue v,
///    with lambda_d <= v <= lambda_{s+1} (no upper limit when s = d).
///  - BottomToOne(s): bottom s directions get preconditioned eigenvalue 1.
struct DeflationSpec {
  DeflationMode mode = DeflationMode::TopToOne;
  int s = 1;
  double v = 1.0;

  static DeflationSpec top_to_one(int s) { return {DeflationMode::TopToOne, s, 1.0}; }
  static DeflationSpec top_to_common(int s, double v) { return {DeflationMode::TopToCommon, s, v}; }
  static DeflationSpec bottom_to_one(int s) { return {DeflationMode::BottomToOne, s, 1.0}; }

  std::string label() const;
};

/// M = I + U_s (diag(tau) - I) U_s^T with orthonormal U_s.
class SpectralDeflation final : public Preconditioner {
 public:
  SpectralDeflation(Mat basis, Vec tau);

  PreconditionerKind kind() const override { return PreconditionerKind::SpectralDeflation; }
  Index dim() const override { return basis_.rows(); }
  /// v + U_s (tau^{-1} - 1) U_s^T v, exact because U_s is orthonormal.
  Vec apply_inverse(const Vec& v) const override;
  /// M v = v + U_s (tau - 1) U_s^T v.
  Vec apply(const Vec& v) const;
  std::optional<Mat> materialize() const override;
  std::optional<Vec> closed_form_spectrum(std::uint64_t model_fingerprint) const override;

  const Mat& basis() const { return basis_; }
  const Vec& tau() const { return tau_; }

 private:
  friend SpectralDeflation build_deflation(const QuadraticModel&, const DeflationSpec&);

  Mat basis_;
  Vec tau_;
  std::optional<std::uint64_t> model_fingerprint_;
  Vec preconditioned_spectrum_;
};

/// Spectral preconditioner of the diagnostic quadratic for one of the three
/// deflation modes. Throws InputError when the spec is inconsistent with the
/// model's spectrum.
SpectralDeflation build_deflation(const QuadraticModel& model, const DeflationSpec& spec);

class DiagonalPreconditioner final : public Preconditioner {
 public:
  /// M = diag(m); every entry must be positive.
  explicit DiagonalPreconditioner(Vec diagonal);

  /// Adam/RMSProp-style M = diag(sqrt(s) + eps).
  static DiagonalPreconditioner from_moments(const Vec& second_moments, double eps);

  PreconditionerKind kind() const override { return PreconditionerKind::Diagonal; }
  Index dim() const override { return diagonal_.size(); }
  Vec apply_inverse(const Vec& v) const override { return v.cwiseQuotient(diagonal_); }
  std::optional<Mat> materialize() const override { return Mat(diagonal_.asDiagonal()); }

  const Vec& diagonal() const { return diagonal_; }

 private:
  Vec diagonal_;
};

/// Free-function form of DiagonalPreconditioner::from_moments.
inline DiagonalPreconditioner diagonal_precond_from_moments(const Vec& s_k, double eps) {
  return DiagonalPreconditioner::from_moments(s_k, eps);
}

/// Limited-memory BFGS history. apply_inverse(g) returns H_approx g via the
/// two-loop recursion with H_0 = (s_m^T y_m / y_m^T y_m) I taken from the
/// newest pair, so the implied metric is M = H_approx^{-1}.
class LbfgsMemory final : public Preconditioner {
 public:
  explicit LbfgsMemory(Index dim, int capacity = 100);

  PreconditionerKind kind() const override { return PreconditionerKind::LbfgsMemory; }
  Index dim() const override { return dim_; }
  Vec apply_inverse(const Vec& g) const override;

  /// Store (s, y) if s^T y > 0; the oldest pair is evicted at capacity.
  /// Returns whether the pair was accepted.
  bool push(const Vec& s, const Vec& y);
  std::size_t size() const { return pairs_.size(); }
  int capacity() const { return capacity_; }
  void clear() { pairs_.clear(); }

 private:
  struct Pair {
    Vec s;
    Vec y;
    double rho;  // 1 / (s^T y)
  };

  Index dim_;
  int capacity_;
  std::deque<Pair> pairs_;
};

/// Quasi-Newton search direction -H_approx g; -g for an empty memory.
Vec lbfgs_direction(const LbfgsMemory& memory, const Vec& g);

/// M = A + lambda I for a curvature operator A (Hessian or GGN products),
/// applied through a budgeted CG solve.
class CurvatureCgPreconditioner final : public Preconditioner {
 public:
  CurvatureCgPreconditioner(Index dim, LinearOperator curvature, CgConfig cfg);

  PreconditionerKind kind() const override { return PreconditionerKind::CurvatureCG; }
  Index dim() const override { return dim_; }
  Vec apply_inverse(const Vec& g) const override;

 private:
  Index dim_;
  LinearOperator curvature_;
  CgConfig cfg_;
};

/// Approximate (A + lambda I)^{-1} g with at most cfg.max_iters CG steps.
/// CG failures are rethrown with the curvature context prepended.
Vec curvature_cg_precondition(const LinearOperator& apply_curvature, const Vec& g,
                              const CgConfig& cfg);

}  // namespace psgd
