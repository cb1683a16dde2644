#include "psgd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "psgd/rng.hpp"

namespace psgd {

bool all_finite(const Mat& a) { return a.allFinite(); }

Mat SymEig::reconstruct() const { return reconstruct(eigenvalues); }

Mat SymEig::reconstruct(const Vec& mapped_eigenvalues) const {
  return eigenvectors * mapped_eigenvalues.asDiagonal() * eigenvectors.transpose();
}

SymEig eig_spd(const Mat& input) {
  if (input.rows() != input.cols()) {
    throw InputError("eig_spd: matrix is " + std::to_string(input.rows()) + "x" +
                     std::to_string(input.cols()) + ", expected square");
  }
  if (!input.allFinite()) throw InputError("eig_spd: matrix has non-finite entries");

  const Index n = input.rows();
  Mat a = 0.5 * (input + input.transpose());
  Mat v = Mat::Identity(n, n);
  const double scale = a.norm();

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && scale > 0.0; ++sweep) {
    double off = 0.0;
    for (Index q = 1; q < n; ++q)
      for (Index p = 0; p < q; ++p) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * scale) break;

    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= std::numeric_limits<double>::min()) continue;
        // Symmetric 2x2 Schur rotation, smaller of the two angles.
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        const Vec col_p = a.col(p);
        a.col(p) = c * col_p - s * a.col(q);
        a.col(q) = s * col_p + c * a.col(q);
        const Eigen::RowVectorXd row_p = a.row(p);
        a.row(p) = c * row_p - s * a.row(q);
        a.row(q) = s * row_p + c * a.row(q);
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        const Vec vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymEig out{Vec(n), Mat(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.eigenvectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

Mat haar_orthogonal(Index d, std::uint64_t seed) {
  if (d < 1) throw InputError("haar_orthogonal: dimension must be >= 1");
  Rng rng(seed, "haar");
  Mat g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = rng.normal();

  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(d, d);
  const Mat& r = qr.matrixQR();
  for (Index i = 0; i < d; ++i)
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  return q;
}

void CgConfig::validate() const {
  if (max_iters < 1) throw InputError("cg: max_iters must be >= 1");
  if (!(tol > 0.0)) throw InputError("cg: tol must be > 0");
  if (!(damping >= 0.0) || !std::isfinite(damping)) throw InputError("cg: damping must be >= 0");
}

CgResult cg_solve(const LinearOperator& apply_a, const Vec& b, const CgConfig& cfg) {
  cfg.validate();
  if (!b.allFinite()) throw InputError("cg: right-hand side has non-finite entries");

  CgResult res;
  res.x = Vec::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) return res;

  auto apply_damped = [&](const Vec& p) -> Vec {
    Vec out = apply_a(p);
    if (cfg.damping != 0.0) out += cfg.damping * p;
    return out;
  };

  Vec r = b;
  Vec p = r;
  double rs = r.squaredNorm();
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const Vec ap = apply_damped(p);
    const double curvature = p.dot(ap);
    if (!std::isfinite(curvature)) throw NumericalError("cg: non-finite curvature p^T A p", it);
    if (curvature <= 0.0) {
      res.nonpositive_curvature = true;
      if (it == 1) {
        res.x = b;
        res.rel_residual = (apply_damped(b) - b).norm() / b_norm;
        return res;
      }
      break;
    }
    const double step = rs / curvature;
    res.x += step * p;
    r -= step * ap;
    const double rs_next = r.squaredNorm();
    res.iters = it;
    if (!std::isfinite(rs_next) || !res.x.allFinite())
      throw NumericalError("cg: non-finite residual", it);
    const double beta = rs_next / rs;
    rs = rs_next;
    if (std::sqrt(rs) <= cfg.tol * b_norm) break;
    p = r + beta * p;
  }
  res.rel_residual = std::sqrt(rs) / b_norm;
  return res;
}

}  // namespace psgd
