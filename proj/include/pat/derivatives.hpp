#pragma once

// Discrete derivative filters on row-major images and the stacked operators
// built from them.
//
//   d2/dx2, d2/dy2 : [1, -2, 1] with half-sample mirror extension
//                    (x[-1] = x[0], x[n] = x[n-1]); self-adjoint.
//   d/dx, d/dy     : forward difference x[c+1] - x[c], zero in the last
//                    column/row (mirror extension).
//   cross          : sqrt(2) * d/dy(d/dx x), i.e. sqrt(2) [[1,-1],[-1,1]].
//
// D_alpha x = [sqrt(a) x; sqrt(1-a) Dxx x; sqrt(1-a) Dyy x; sqrt(1-a) Dxy x]
// and Dbar_alpha x = [x; D_alpha x].

#include <Eigen/Core>

#include <cmath>

namespace pat {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ImageShape {
  int nx = 0;
  int ny = 0;
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(nx) * ny; }
  bool operator==(const ImageShape&) const = default;
};

namespace detail {

template <typename Scalar, typename In, typename Out>
void second_diff_x(const ImageShape& s, const In& x, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c < s.nx; ++c) {
      const Scalar left = x[row + (c > 0 ? c - 1 : 0)];
      const Scalar right = x[row + (c + 1 < s.nx ? c + 1 : s.nx - 1)];
      y[row + c] = left - Scalar(2) * x[row + c] + right;
    }
  }
}

template <typename Scalar, typename In, typename Out>
void second_diff_y(const ImageShape& s, const In& x, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index up = static_cast<Eigen::Index>(r > 0 ? r - 1 : 0) * s.nx;
    const Eigen::Index down = static_cast<Eigen::Index>(r + 1 < s.ny ? r + 1 : s.ny - 1) * s.nx;
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c < s.nx; ++c) y[row + c] = x[up + c] - Scalar(2) * x[row + c] + x[down + c];
  }
}

template <typename Scalar, typename In, typename Out>
void forward_diff_x(const ImageShape& s, const In& x, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c + 1 < s.nx; ++c) y[row + c] = x[row + c + 1] - x[row + c];
    y[row + s.nx - 1] = Scalar(0);
  }
}

template <typename Scalar, typename In, typename Out>
void forward_diff_x_adjoint(const ImageShape& s, const In& v, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c < s.nx; ++c) {
      Scalar acc(0);
      if (c >= 1) acc += v[row + c - 1];
      if (c + 1 < s.nx) acc -= v[row + c];
      y[row + c] = acc;
    }
  }
}

template <typename Scalar, typename In, typename Out>
void forward_diff_y(const ImageShape& s, const In& x, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c < s.nx; ++c) y[row + c] = (r + 1 < s.ny) ? x[row + s.nx + c] - x[row + c] : Scalar(0);
  }
}

template <typename Scalar, typename In, typename Out>
void forward_diff_y_adjoint(const ImageShape& s, const In& v, Out&& y) {
  for (int r = 0; r < s.ny; ++r) {
    const Eigen::Index row = static_cast<Eigen::Index>(r) * s.nx;
    for (int c = 0; c < s.nx; ++c) {
      Scalar acc(0);
      if (r >= 1) acc += v[row - s.nx + c];
      if (r + 1 < s.ny) acc -= v[row + c];
      y[row + c] = acc;
    }
  }
}

}  // namespace detail

template <typename Derived>
VectorX<typename Derived::Scalar> second_diff_x(const ImageShape& s, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = x;
  VectorX<S> out(in.size());
  detail::second_diff_x<S>(s, in, out);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> second_diff_y(const ImageShape& s, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = x;
  VectorX<S> out(in.size());
  detail::second_diff_y<S>(s, in, out);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> forward_diff_x(const ImageShape& s, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = x;
  VectorX<S> out(in.size());
  detail::forward_diff_x<S>(s, in, out);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> forward_diff_y(const ImageShape& s, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = x;
  VectorX<S> out(in.size());
  detail::forward_diff_y<S>(s, in, out);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> forward_diff_x_adjoint(const ImageShape& s, const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = v;
  VectorX<S> out(in.size());
  detail::forward_diff_x_adjoint<S>(s, in, out);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> forward_diff_y_adjoint(const ImageShape& s, const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const VectorX<S> in = v;
  VectorX<S> out(in.size());
  detail::forward_diff_y_adjoint<S>(s, in, out);
  return out;
}

/// sqrt(2) d2/dxdy; rotation-invariant Hessian norm needs the factor inside.
template <typename Derived>
VectorX<typename Derived::Scalar> cross_diff(const ImageShape& s, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return S(std::sqrt(2.0)) * forward_diff_y(s, forward_diff_x(s, x));
}

template <typename Derived>
VectorX<typename Derived::Scalar> cross_diff_adjoint(const ImageShape& s, const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  return S(std::sqrt(2.0)) * forward_diff_x_adjoint(s, forward_diff_y_adjoint(s, v));
}

/// The stacked operator D_alpha: identity block weighted by sqrt(alpha), then
/// the three second-order filters weighted by sqrt(1 - alpha).
struct DerivativeStack {
  ImageShape shape;
  double alpha = 0.5;

  static constexpr int kBlocks = 4;

  double intensity_weight() const { return std::sqrt(alpha); }
  double derivative_weight() const { return std::sqrt(1.0 - alpha); }
  Eigen::Index pixels() const { return shape.pixels(); }
};

/// D_alpha x, blocks ordered (identity, xx, yy, xy); length 4N.
template <typename Derived>
VectorX<typename Derived::Scalar> apply_dalpha(const DerivativeStack& st, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = st.pixels();
  const VectorX<S> in = x;
  VectorX<S> out(4 * n);
  const S wi = S(st.intensity_weight());
  const S wd = S(st.derivative_weight());
  out.segment(0, n) = wi * in;
  detail::second_diff_x<S>(st.shape, in, out.segment(n, n));
  detail::second_diff_y<S>(st.shape, in, out.segment(2 * n, n));
  out.segment(3 * n, n) = cross_diff(st.shape, in);
  out.segment(n, 3 * n) *= wd;
  return out;
}

/// D_alpha^t v for v of length 4N.
template <typename Derived>
VectorX<typename Derived::Scalar> apply_dalpha_adjoint(const DerivativeStack& st, const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = st.pixels();
  const VectorX<S> in = v;
  VectorX<S> out = S(st.intensity_weight()) * in.segment(0, n);
  VectorX<S> tmp(n);
  detail::second_diff_x<S>(st.shape, in.segment(n, n), tmp);
  VectorX<S> deriv = tmp;
  detail::second_diff_y<S>(st.shape, in.segment(2 * n, n), tmp);
  deriv += tmp;
  deriv += cross_diff_adjoint(st.shape, in.segment(3 * n, n));
  out += S(st.derivative_weight()) * deriv;
  return out;
}

/// Dbar_alpha x = [x; D_alpha x]; length 5N.
template <typename Derived>
VectorX<typename Derived::Scalar> apply_dbar(const DerivativeStack& st, const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  const Eigen::Index n = st.pixels();
  VectorX<S> out(5 * n);
  out.head(n) = x;
  out.tail(4 * n) = apply_dalpha(st, x);
  return out;
}

template <typename Derived>
VectorX<typename Derived::Scalar> apply_dbar_adjoint(const DerivativeStack& st, const Eigen::MatrixBase<Derived>& v) {
  const Eigen::Index n = st.pixels();
  return v.head(n) + apply_dalpha_adjoint(st, v.tail(4 * n));
}

}  // namespace pat
