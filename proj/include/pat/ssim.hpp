#pragma once

// Structural similarity with a Gaussian window:
//
//   SSIM = (2 mu_a mu_b + C1)(2 cov_ab + C2) / ((mu_a^2 + mu_b^2 + C1)(var_a + var_b + C2))
//
// local moments taken with an isotropic Gaussian of width sigma truncated to
// window x window taps, C1 = (k1 L)^2, C2 = (k2 L)^2 for dynamic range L, and
// the map averaged over pixels whose window lies fully inside the image.

#include "pat/derivatives.hpp"
#include "pat/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <vector>

namespace pat {

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  /// Taken from the reference image's peak when unset.
  std::optional<double> dynamic_range;
};

namespace detail {

template <typename Scalar>
std::vector<Scalar> gaussian_taps(int window, Scalar sigma) {
  std::vector<Scalar> taps(static_cast<std::size_t>(window));
  const int half = window / 2;
  Scalar sum = 0;
  for (int i = 0; i < window; ++i) {
    const Scalar d = static_cast<Scalar>(i - half);
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (Scalar(2) * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Separable filtering restricted to "valid" output positions; the result has
// (nx - window + 1) x (ny - window + 1) entries, row-major.
template <typename Scalar>
VectorX<Scalar> filter_valid(const ImageShape& s, const VectorX<Scalar>& x, const std::vector<Scalar>& taps) {
  const int w = static_cast<int>(taps.size());
  const int ox = s.nx - w + 1;
  const int oy = s.ny - w + 1;
  VectorX<Scalar> rows(static_cast<Eigen::Index>(ox) * s.ny);
  for (int r = 0; r < s.ny; ++r)
    for (int c = 0; c < ox; ++c) {
      Scalar acc = 0;
      for (int t = 0; t < w; ++t) acc += taps[static_cast<std::size_t>(t)] * x[static_cast<Eigen::Index>(r) * s.nx + c + t];
      rows[static_cast<Eigen::Index>(r) * ox + c] = acc;
    }
  VectorX<Scalar> out(static_cast<Eigen::Index>(ox) * oy);
  for (int r = 0; r < oy; ++r)
    for (int c = 0; c < ox; ++c) {
      Scalar acc = 0;
      for (int t = 0; t < w; ++t) acc += taps[static_cast<std::size_t>(t)] * rows[static_cast<Eigen::Index>(r + t) * ox + c];
      out[static_cast<Eigen::Index>(r) * ox + c] = acc;
    }
  return out;
}

}  // namespace detail

/// Local SSIM values at every valid window position, row-major.
template <typename DerivedA, typename DerivedB>
VectorX<typename DerivedA::Scalar> ssim_map(const ImageShape& shape, const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b, const SsimConfig& cfg,
                                            typename DerivedA::Scalar dynamic_range) {
  using Scalar = typename DerivedA::Scalar;
  require(a.size() == shape.pixels() && b.size() == shape.pixels(), ErrorKind::DimensionMismatch,
          "SSIM inputs differ in size");
  require(cfg.window >= 1 && cfg.window % 2 == 1 && cfg.sigma > 0 && cfg.k1 > 0 && cfg.k2 > 0,
          ErrorKind::InvalidArgument, "invalid SSIM settings");
  require(shape.nx >= cfg.window && shape.ny >= cfg.window, ErrorKind::DimensionMismatch,
          "image is smaller than the SSIM window");
  const auto taps = detail::gaussian_taps<Scalar>(cfg.window, static_cast<Scalar>(cfg.sigma));
  const VectorX<Scalar> va = a;
  const VectorX<Scalar> vb = b;
  const VectorX<Scalar> mu_a = detail::filter_valid(shape, va, taps);
  const VectorX<Scalar> mu_b = detail::filter_valid(shape, vb, taps);
  const VectorX<Scalar> aa = detail::filter_valid<Scalar>(shape, va.cwiseProduct(va), taps);
  const VectorX<Scalar> bb = detail::filter_valid<Scalar>(shape, vb.cwiseProduct(vb), taps);
  const VectorX<Scalar> ab = detail::filter_valid<Scalar>(shape, va.cwiseProduct(vb), taps);
  const Scalar c1 = std::pow(static_cast<Scalar>(cfg.k1) * dynamic_range, 2);
  const Scalar c2 = std::pow(static_cast<Scalar>(cfg.k2) * dynamic_range, 2);
  VectorX<Scalar> out(mu_a.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const Scalar var_a = aa[i] - mu_a[i] * mu_a[i];
    const Scalar var_b = bb[i] - mu_b[i] * mu_b[i];
    const Scalar cov = ab[i] - mu_a[i] * mu_b[i];
    out[i] = (Scalar(2) * mu_a[i] * mu_b[i] + c1) * (Scalar(2) * cov + c2) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
  }
  return out;
}

/// Mean SSIM of `recon` against `truth`; the dynamic range defaults to the
/// peak of `truth` (1 when the truth is all zero).
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar ssim(const ImageShape& shape, const Eigen::MatrixBase<DerivedA>& recon,
                               const Eigen::MatrixBase<DerivedB>& truth, const SsimConfig& cfg = {}) {
  using Scalar = typename DerivedA::Scalar;
  Scalar range = cfg.dynamic_range ? static_cast<Scalar>(*cfg.dynamic_range) : truth.maxCoeff();
  if (!(range > Scalar(0))) range = Scalar(1);
  return ssim_map(shape, recon, truth, cfg, range).mean();
}

}  // namespace pat
