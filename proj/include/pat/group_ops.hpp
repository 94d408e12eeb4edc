#pragma once

// Group-sparsity primitives on interlaced 4N vectors. The r-th slice of v is
// (v_r, v_{r+N}, v_{r+2N}, v_{r+3N}).

#include "pat/derivatives.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace pat {

/// Sum over slices of the slice Euclidean norm. N is inferred as size / blocks.
template <typename Derived>
typename Derived::Scalar group_norm(const Eigen::MatrixBase<Derived>& v, int blocks = DerivativeStack::kBlocks) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = v.size() / blocks;
  S total(0);
  for (Eigen::Index r = 0; r < n; ++r) {
    S sq(0);
    for (int j = 0; j < blocks; ++j) sq += v[r + j * n] * v[r + j * n];
    total += std::sqrt(sq);
  }
  return total;
}

/// Proximal map of t * ||.||_2: shrinks z towards the origin by t.
template <typename Derived>
VectorX<typename Derived::Scalar> prox_group(const Eigen::MatrixBase<Derived>& z, typename Derived::Scalar threshold) {
  using S = typename Derived::Scalar;
  const S norm = z.norm();
  if (norm <= threshold || norm == S(0)) return VectorX<S>::Zero(z.size());
  return ((norm - threshold) / norm) * z;
}

/// Slice-wise prox of t * S(.) for an interlaced vector, in place.
template <typename Scalar>
void prox_slices_inplace(VectorX<Scalar>& v, Scalar threshold, int blocks = DerivativeStack::kBlocks) {
  const Eigen::Index n = v.size() / blocks;
  for (Eigen::Index r = 0; r < n; ++r) {
    Scalar sq(0);
    for (int j = 0; j < blocks; ++j) sq += v[r + j * n] * v[r + j * n];
    const Scalar norm = std::sqrt(sq);
    const Scalar scale = (norm > threshold) ? (norm - threshold) / norm : Scalar(0);
    for (int j = 0; j < blocks; ++j) v[r + j * n] *= scale;
  }
}

template <typename Derived>
VectorX<typename Derived::Scalar> prox_slices(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar threshold,
                                              int blocks = DerivativeStack::kBlocks) {
  VectorX<typename Derived::Scalar> out = v;
  prox_slices_inplace(out, threshold, blocks);
  return out;
}

/// Componentwise projection onto [0, upper].
template <typename Derived>
VectorX<typename Derived::Scalar> clip_box(const Eigen::MatrixBase<Derived>& v, typename Derived::Scalar upper) {
  using S = typename Derived::Scalar;
  return v.derived().cwiseMax(S(0)).cwiseMin(upper);
}

/// R_hc(x, alpha) = sum_r sqrt(alpha x_r^2 + (1 - alpha) sum_i (D_2,i x)_r^2).
/// With alpha = 0 this is second-order total variation.
template <typename Derived>
typename Derived::Scalar eval_rhc(const DerivativeStack& st, const Eigen::MatrixBase<Derived>& x) {
  return group_norm(apply_dalpha(st, x));
}

}  // namespace pat
