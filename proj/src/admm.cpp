#include "pat/admm.hpp"

#include "pat/error.hpp"
#include "pat/group_ops.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <deque>
#include <mutex>
#include <ostream>
#include <tuple>

namespace pat {

Eigen::VectorXd AdmmState::y() const {
  Eigen::VectorXd out(b.size() + d.size());
  out << b, d;
  return out;
}

CostBreakdown eval_cost(const Eigen::Ref<const Eigen::VectorXd>& x, const ForwardOperator& op,
                        const Eigen::Ref<const Eigen::VectorXd>& m, double lambda, double alpha, double u) {
  require(x.size() == op.cols(), ErrorKind::DimensionMismatch, "image size does not match operator");
  require(m.size() == op.rows(), ErrorKind::DimensionMismatch, "measurement size does not match operator");
  CostBreakdown c;
  c.lambda = lambda;
  c.data_term = (m - op.matrix * x).squaredNorm() / static_cast<double>(op.rows());
  c.reg_term = eval_rhc(DerivativeStack{{op.grid.nx, op.grid.ny}, alpha}, x);
  c.total_without_bound = c.data_term + lambda * c.reg_term;
  if (x.size() > 0) c.bound_violation = std::max({0.0, x.maxCoeff() - u, -x.minCoeff()});
  return c;
}

NormalInverse::NormalInverse(const ForwardOperator& op, const DerivativeStack& stack, double beta) {
  const Eigen::Index n = op.cols();
  const double data_scale = 2.0 / static_cast<double>(op.rows());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  // (2/n) H^t H accumulated row by row; only the lower triangle is needed.
  const auto& h = op.matrix;
  for (Eigen::Index r = 0; r < h.outerSize(); ++r) {
    const int begin = h.outerIndexPtr()[r];
    const int end = h.outerIndexPtr()[r + 1];
    const int* cols = h.innerIndexPtr();
    const double* vals = h.valuePtr();
    for (int p = begin; p < end; ++p) {
      const double wp = data_scale * vals[p];
      for (int q = begin; q <= p; ++q) a(cols[p], cols[q]) += wp * vals[q];
    }
  }
  // beta (I + D^t D), column by column; the stencil is local so only a band
  // of each column is non-zero.
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    const Eigen::VectorXd col = e + apply_dalpha_adjoint(stack, apply_dalpha(stack, e));
    e[j] = 0.0;
    for (Eigen::Index i = j; i < n; ++i) {
      if (col[i] != 0.0) a(i, j) += beta * col[i];
    }
  }
  Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(a);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::NonConvergence, "x-update matrix is not positive definite");
  inverse_ = Eigen::MatrixXd::Identity(n, n);
  llt.solveInPlace(inverse_);
}

Eigen::VectorXd NormalInverse::solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const {
  return inverse_.selfadjointView<Eigen::Lower>() * rhs;
}

namespace {

struct CacheEntry {
  std::uint64_t fingerprint;
  Eigen::Index rows;
  ImageShape shape;
  double alpha;
  double beta;
  std::shared_ptr<const NormalInverse> inverse;
};

std::mutex g_cache_mutex;
std::deque<CacheEntry> g_cache;
constexpr std::size_t kCacheEntries = 4;

}  // namespace

std::shared_ptr<const NormalInverse> cached_normal_inverse(const ForwardOperator& op, const DerivativeStack& stack,
                                                           double beta) {
  std::lock_guard lock(g_cache_mutex);
  for (const auto& e : g_cache) {
    if (e.fingerprint == op.fingerprint && e.rows == op.rows() && e.shape == stack.shape && e.alpha == stack.alpha &&
        e.beta == beta)
      return e.inverse;
  }
  auto inv = std::make_shared<const NormalInverse>(op, stack, beta);
  g_cache.push_back({op.fingerprint, op.rows(), stack.shape, stack.alpha, beta, inv});
  if (g_cache.size() > kCacheEntries) g_cache.pop_front();
  return inv;
}

void clear_normal_inverse_cache() {
  std::lock_guard lock(g_cache_mutex);
  g_cache.clear();
}

AdmmProblem::AdmmProblem(const ForwardOperator& op, Eigen::VectorXd m, double alpha, double u, AdmmConfig cfg)
    : op_(&op), m_(std::move(m)), stack_{{op.grid.nx, op.grid.ny}, alpha}, u_(u), cfg_(cfg) {
  require(m_.size() == op.rows(), ErrorKind::DimensionMismatch,
          "measurement has " + std::to_string(m_.size()) + " samples, operator has " + std::to_string(op.rows()));
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
  require(u > 0.0, ErrorKind::InvalidArgument, "upper bound must be positive");
  require(cfg_.beta > 0 && cfg_.cg_tol > 0 && cfg_.cg_max_iter > 0 && cfg_.max_outer_iter > 0 &&
              cfg_.primal_tol > 0 && cfg_.dual_tol > 0,
          ErrorKind::InvalidArgument, "ADMM settings must be positive");
  data_rhs_ = (2.0 / static_cast<double>(op.rows())) * (op.matrix.transpose() * m_);
  const bool dense = cfg_.x_update == XUpdateMethod::DenseInverse ||
                     (cfg_.x_update == XUpdateMethod::Auto && op.cols() <= cfg_.dense_limit);
  if (dense) inverse_ = cached_normal_inverse(op, stack_, cfg_.beta);
}

AdmmState AdmmProblem::initial_state(const Eigen::Ref<const Eigen::VectorXd>& x0) const {
  require(x0.size() == op_->cols(), ErrorKind::DimensionMismatch, "initial image size mismatch");
  AdmmState s;
  s.x = x0;
  s.b = x0;
  s.d = apply_dalpha(stack_, x0);
  s.yhat = Eigen::VectorXd::Zero(5 * op_->cols());
  return s;
}

AdmmState AdmmProblem::initial_state() const { return initial_state(Eigen::VectorXd::Zero(op_->cols())); }

Eigen::VectorXd AdmmProblem::x_update(const AdmmState& s) const {
  const Eigen::Index n = op_->cols();
  const double beta = cfg_.beta;
  Eigen::VectorXd rhs = data_rhs_ + (beta * s.b - s.yhat.head(n)) +
                        apply_dalpha_adjoint(stack_, beta * s.d - s.yhat.tail(4 * n));
  if (inverse_) return inverse_->solve(rhs);

  const double data_scale = 2.0 / static_cast<double>(op_->rows());
  auto normal = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd out = data_scale * (op_->matrix.transpose() * (op_->matrix * v));
    out += beta * (v + apply_dalpha_adjoint(stack_, apply_dalpha(stack_, v)));
    return out;
  };
  Eigen::VectorXd x = s.x;
  const CgReport rep = conjugate_gradient<double>(normal, rhs, x, {cfg_.cg_tol, cfg_.cg_max_iter});
  if (!rep.converged)
    throw Error(ErrorKind::NonConvergence,
                fmt::format("x-update CG reached relative residual {:.3g} after {} iterations", rep.relative_residual,
                            rep.iterations));
  return x;
}

void AdmmProblem::y_update(AdmmState& s, double lambda) const {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be non-negative");
  const Eigen::Index n = op_->cols();
  const double beta = cfg_.beta;
  s.d = apply_dalpha(stack_, s.x) + s.yhat.tail(4 * n) / beta;
  prox_slices_inplace<double>(s.d, lambda / beta);
  s.b = clip_box(s.x + s.yhat.head(n) / beta, u_);
}

void AdmmProblem::dual_update(AdmmState& s) const {
  const Eigen::Index n = op_->cols();
  const double beta = cfg_.beta;
  s.yhat.head(n) += beta * (s.x - s.b);
  s.yhat.tail(4 * n) += beta * (apply_dalpha(stack_, s.x) - s.d);
}

bool AdmmProblem::residuals_converged(const AdmmState& s) const {
  const Eigen::Index n = op_->cols();
  constexpr double kAbs = 1e-13;
  const Eigen::VectorXd dx = apply_dalpha(stack_, s.x);
  const double dbar_x = std::sqrt(s.x.squaredNorm() + dx.squaredNorm());
  const double y_norm = std::sqrt(s.b.squaredNorm() + s.d.squaredNorm());
  const double dual_scale = apply_dbar_adjoint(stack_, s.yhat).norm();
  const double primal_eps = kAbs * std::sqrt(5.0 * n) + cfg_.primal_tol * std::max(dbar_x, y_norm);
  const double dual_eps = kAbs * std::sqrt(static_cast<double>(n)) + cfg_.dual_tol * dual_scale;
  return s.primal_residual <= primal_eps && s.dual_residual <= dual_eps;
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void AdmmProblem::iterate(AdmmState& s, double lambda) const {
  const Eigen::Index n = op_->cols();
  const Eigen::VectorXd b_prev = s.b;
  const Eigen::VectorXd d_prev = s.d;
  s.x = x_update(s);
  y_update(s, lambda);
  const Eigen::VectorXd yhat_prev = s.yhat;
  dual_update(s);
  ++s.iterations;

  s.primal_residual = (s.yhat - yhat_prev).norm() / cfg_.beta;
  Eigen::VectorXd dy(5 * n);
  dy << s.b - b_prev, s.d - d_prev;
  s.dual_residual = cfg_.beta * apply_dbar_adjoint(stack_, dy).norm();

  if (cfg_.record_history || cfg_.trace) {
    const CostBreakdown c = cost(s.x, lambda);
    if (cfg_.record_history) {
      s.primal_history.push_back(s.primal_residual);
      s.dual_history.push_back(s.dual_residual);
      s.cost_history.push_back(c.total_without_bound);
    }
    if (cfg_.trace) {
      static thread_local auto start = std::chrono::steady_clock::now();
      if (s.iterations == 1) start = std::chrono::steady_clock::now();
      *cfg_.trace << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.3f}\n", s.iterations, c.data_term,
                                 c.reg_term, s.primal_residual, s.dual_residual, elapsed_ms(start));
    }
  }
}

void AdmmProblem::partial(AdmmState& s, double lambda, int cycles) const {
  require(cycles >= 1, ErrorKind::InvalidArgument, "partial ADMM needs at least one cycle");
  for (int i = 0; i < cycles; ++i) iterate(s, lambda);
}

AdmmResult AdmmProblem::solve(double lambda, AdmmState warm) const {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be non-negative");
  AdmmResult out;
  out.state = std::move(warm);
  const int start = out.state.iterations;
  while (out.state.iterations - start < cfg_.max_outer_iter) {
    iterate(out.state, lambda);
    if (residuals_converged(out.state)) {
      out.converged = true;
      break;
    }
  }
  out.image = ImageGrid(op_->grid.nx, op_->grid.ny, op_->grid.spacing_mm, out.state.x);
  out.cost = cost(out.state.x, lambda);
  return out;
}

CostBreakdown AdmmProblem::cost(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) const {
  return eval_cost(x, *op_, m_, lambda, stack_.alpha, u_);
}

Eigen::VectorXd admm_x_update(const AdmmProblem& p, const AdmmState& s) { return p.x_update(s); }
void admm_y_update(const AdmmProblem& p, AdmmState& s, double lambda) { p.y_update(s, lambda); }
void admm_dual_update(const AdmmProblem& p, AdmmState& s) { p.dual_update(s); }
void admm_partial(const AdmmProblem& p, AdmmState& s, double lambda, int cycles) { p.partial(s, lambda, cycles); }

AdmmResult admm_solve(const ForwardOperator& op, const Eigen::VectorXd& m, double lambda, double alpha, double u,
                      const AdmmConfig& cfg, const Eigen::VectorXd& x0) {
  const AdmmProblem problem(op, m, alpha, u, cfg);
  return problem.solve(lambda, problem.initial_state(x0));
}

}  // namespace pat
