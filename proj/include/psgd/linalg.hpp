#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

#include "psgd/errors.hpp"

namespace psgd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// A linear operator given only through its action on a vector.
using LinearOperator = std::function<Vec(const Vec&)>;

/// Eigenpairs of a symmetric matrix. eigenvalues are sorted descending and
/// column i of eigenvectors belongs to eigenvalue i.
struct SymEig {
  Vec eigenvalues;
  Mat eigenvectors;

  Index dim() const { return eigenvalues.size(); }
  /// U diag(f(lambda)) U^T.
  Mat reconstruct() const;
  Mat reconstruct(const Vec& mapped_eigenvalues) const;
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. The input is
/// symmetrized as (A + A^T)/2 first. Intended for d up to a few hundred.
/// Throws InputError on non-square or non-finite input.
SymEig eig_spd(const Mat& a);

/// Haar-distributed orthogonal matrix: QR of a d x d standard-normal matrix
/// with the columns of Q flipped so that diag(R) > 0.
Mat haar_orthogonal(Index d, std::uint64_t seed);

struct CgConfig {
  int max_iters = 100;
  double tol = 1e-10;
  /// lambda in (A + lambda I) x = b.
  double damping = 0.0;

  void validate() const;
};

struct CgResult {
  Vec x;
  int iters = 0;
  /// ||(A + lambda I) x - b|| / ||b|| as tracked by the CG recurrence.
  double rel_residual = 0.0;
  /// Set when p^T (A + lambda I) p <= 0 stopped the iteration early.
  bool nonpositive_curvature = false;
};

/// Unpreconditioned conjugate gradients on (A + damping I) x = b starting
/// from x = 0.
///
/// Stops after max_iters steps or once the relative residual drops to tol.
/// A direction of non-positive curvature ends the iteration with the current
/// iterate; if that happens on the first step the result is x = b so callers
/// always receive a descent-aligned vector. Non-finite intermediate values
/// throw NumericalError with the failing iteration.
CgResult cg_solve(const LinearOperator& apply_a, const Vec& b, const CgConfig& cfg);

/// Fill a vector with standard normals drawn from the given generator.
template <class Gen>
Vec standard_normal(Index n, Gen& gen) {
  Vec z(n);
  for (Index i = 0; i < n; ++i) z[i] = gen.normal();
  return z;
}

bool all_finite(const Mat& a);

}  // namespace psgd
