#pragma once

#include "pat/cg.hpp"
#include "pat/derivatives.hpp"
#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"

namespace pat {

/// sum_i ||D_{o,i} x||^2 for derivative order o in {1, 2}.
double eval_tikhonov(const ImageShape& shape, const Eigen::Ref<const Eigen::VectorXd>& x, int order);

/// sum_i D_{o,i}^t D_{o,i} x.
Eigen::VectorXd tikhonov_normal(const ImageShape& shape, const Eigen::Ref<const Eigen::VectorXd>& x, int order);

struct TikhonovResult {
  ImageGrid image;
  CgReport cg;
};

/// Solves (H^t H + lambda sum_i D_{o,i}^t D_{o,i}) x = H^t m by conjugate
/// gradients. Throws NonConvergence if the iteration cap is hit.
TikhonovResult solve_tikhonov(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double lambda,
                              int order, const CgOptions& opt = {1e-8, 5000});

}  // namespace pat
