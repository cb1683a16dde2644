#pragma once

#include <cmath>
#include <cstdint>

#include "psgd/linalg.hpp"
#include "psgd/rng.hpp"

namespace psgd::test {

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

inline Mat random_matrix(Index rows, Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// B^T B / d + 0.5 I: condition number around 10.
inline Mat random_spd(Index d, Rng& rng) {
  const Mat b = random_matrix(d, d, rng);
  return b.transpose() * b / static_cast<double>(d) + 0.5 * Mat::Identity(d, d);
}

inline LinearOperator dense_op(const Mat& a) {
  return [a](const Vec& v) -> Vec { return a * v; };
}

}  // namespace psgd::test
