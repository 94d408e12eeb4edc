#pragma once

#include <Eigen/Core>

#include <cmath>

namespace pat {

struct CgOptions {
  double tol = 1e-8;  ///< on ||b - A x|| / ||b||
  int max_iter = 2000;
};

struct CgReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients for a symmetric positive definite operator given as a
/// callable v -> A v. x holds the starting guess on entry.
template <typename Scalar, typename Apply>
CgReport conjugate_gradient(Apply&& apply_a, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b,
                            Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x, const CgOptions& opt = {}) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  CgReport rep;
  const Scalar bnorm = b.norm();
  if (bnorm == Scalar(0)) {
    x.setZero();
    rep.converged = true;
    return rep;
  }
  Vec r = b - apply_a(x);
  Scalar rr = r.squaredNorm();
  rep.relative_residual = std::sqrt(rr) / bnorm;
  if (rep.relative_residual <= opt.tol) {
    rep.converged = true;
    return rep;
  }
  Vec p = r;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Vec ap = apply_a(p);
    const Scalar step = rr / p.dot(ap);
    x.noalias() += step * p;
    r.noalias() -= step * ap;
    const Scalar rr_next = r.squaredNorm();
    rep.iterations = it;
    rep.relative_residual = std::sqrt(rr_next) / bnorm;
    if (rep.relative_residual <= opt.tol) {
      rep.converged = true;
      return rep;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  return rep;
}

}  // namespace pat
