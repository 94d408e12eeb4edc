#include "pat/tikhonov.hpp"

#include "pat/error.hpp"

namespace pat {

namespace {

void check_order(int order) {
  require(order == 1 || order == 2, ErrorKind::InvalidArgument, "derivative order must be 1 or 2");
}

}  // namespace

double eval_tikhonov(const ImageShape& shape, const Eigen::Ref<const Eigen::VectorXd>& x, int order) {
  check_order(order);
  require(x.size() == shape.pixels(), ErrorKind::DimensionMismatch, "image size mismatch");
  if (order == 1) return forward_diff_x(shape, x).squaredNorm() + forward_diff_y(shape, x).squaredNorm();
  return second_diff_x(shape, x).squaredNorm() + second_diff_y(shape, x).squaredNorm() +
         cross_diff(shape, x).squaredNorm();
}

Eigen::VectorXd tikhonov_normal(const ImageShape& shape, const Eigen::Ref<const Eigen::VectorXd>& x, int order) {
  check_order(order);
  if (order == 1)
    return forward_diff_x_adjoint(shape, forward_diff_x(shape, x)) +
           forward_diff_y_adjoint(shape, forward_diff_y(shape, x));
  // The pure second differences are self-adjoint.
  return second_diff_x(shape, second_diff_x(shape, x)) + second_diff_y(shape, second_diff_y(shape, x)) +
         cross_diff_adjoint(shape, cross_diff(shape, x));
}

TikhonovResult solve_tikhonov(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double lambda,
                              int order, const CgOptions& opt) {
  check_order(order);
  require(lambda > 0.0, ErrorKind::InvalidArgument, "lambda must be positive");
  const Eigen::VectorXd rhs = adjoint_vector(op, m);
  const ImageShape shape{op.grid.nx, op.grid.ny};
  auto normal = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return op.matrix.transpose() * (op.matrix * v) + lambda * tikhonov_normal(shape, v, order);
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(op.cols());
  const CgReport rep = conjugate_gradient<double>(normal, rhs, x, opt);
  if (!rep.converged)
    throw Error(ErrorKind::NonConvergence, "Tikhonov CG stopped at relative residual " +
                                               std::to_string(rep.relative_residual) + " after " +
                                               std::to_string(rep.iterations) + " iterations");
  return {ImageGrid(op.grid.nx, op.grid.ny, op.grid.spacing_mm, std::move(x)), rep};
}

}  // namespace pat
