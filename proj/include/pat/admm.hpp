#pragma once

// ADMM for
//
//   J_c(x) = (1/n) ||m - H x||^2 + lambda R_hc(x, alpha) + B_[0,u](x)
//
// with the splitting y = [b; d] = Dbar_alpha x = [x; D_alpha x]:
//
//   x-step : ((2/n) H^t H + beta Dbar^t Dbar) x = (2/n) H^t m + Dbar^t (beta y - yhat)
//   d-step : d_[r] = prox_{lambda/beta ||.||}((D_alpha x + yhat_d / beta)_[r])
//   b-step : b = clip_[0,u](x + yhat_b / beta)
//   dual   : yhat += beta (Dbar x - y)
//
// The x-step matrix does not depend on lambda, so for moderate grids its
// inverse is formed once per (H, alpha, beta) and shared; larger grids use
// matrix-free conjugate gradients.

#include "pat/cg.hpp"
#include "pat/derivatives.hpp"
#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <limits>
#include <memory>
#include <vector>

namespace pat {

enum class XUpdateMethod {
  Auto,          ///< dense inverse when N <= dense_limit, CG otherwise
  ConjugateGradient,
  DenseInverse,
};

struct AdmmConfig {
  double beta = 1.0;
  double cg_tol = 1e-8;
  int cg_max_iter = 2000;
  int max_outer_iter = 3000;
  double primal_tol = 1e-6;
  double dual_tol = 1e-6;
  XUpdateMethod x_update = XUpdateMethod::Auto;
  Eigen::Index dense_limit = 4096;
  bool record_history = false;
  /// CSV rows (iter,data_term,reg_term,primal_res,dual_res,wall_ms) when set.
  std::ostream* trace = nullptr;
};

struct AdmmState {
  Eigen::VectorXd x;     // N
  Eigen::VectorXd b;     // N, always inside [0, u]
  Eigen::VectorXd d;     // 4N
  Eigen::VectorXd yhat;  // 5N, b-part first
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  std::vector<double> primal_history;
  std::vector<double> dual_history;
  std::vector<double> cost_history;

  /// Stacked split variable y = [b; d].
  Eigen::VectorXd y() const;
};

struct CostBreakdown {
  double data_term = 0.0;  ///< (1/n) ||m - H x||^2
  double reg_term = 0.0;   ///< R_hc(x, alpha)
  double lambda = 0.0;
  double total_without_bound = 0.0;
  double bound_violation = 0.0;  ///< max(0, max x - u, -min x)
};

/// Independent of the class below so tests and tracking can evaluate costs
/// without setting up a solver.
CostBreakdown eval_cost(const Eigen::Ref<const Eigen::VectorXd>& x, const ForwardOperator& op,
                        const Eigen::Ref<const Eigen::VectorXd>& m, double lambda, double alpha,
                        double u = std::numeric_limits<double>::infinity());

/// Dense inverse of (2/n) H^t H + beta Dbar^t Dbar.
class NormalInverse {
 public:
  NormalInverse(const ForwardOperator& op, const DerivativeStack& stack, double beta);
  Eigen::VectorXd solve(const Eigen::Ref<const Eigen::VectorXd>& rhs) const;

 private:
  Eigen::MatrixXd inverse_;  // lower triangle is authoritative
};

/// Returns a shared inverse for (op.fingerprint, rows, alpha, beta), building it
/// on first use. A few recent entries are kept.
std::shared_ptr<const NormalInverse> cached_normal_inverse(const ForwardOperator& op, const DerivativeStack& stack,
                                                           double beta);
void clear_normal_inverse_cache();

struct AdmmResult {
  ImageGrid image;
  CostBreakdown cost;
  AdmmState state;
  bool converged = false;
};

/// One reconstruction problem: operator, data, alpha and bound. The operator
/// must outlive the problem.
class AdmmProblem {
 public:
  AdmmProblem(const ForwardOperator& op, Eigen::VectorXd m, double alpha, double u, AdmmConfig cfg = {});

  const ForwardOperator& op() const { return *op_; }
  const Eigen::VectorXd& measurement() const { return m_; }
  const DerivativeStack& stack() const { return stack_; }
  const AdmmConfig& config() const { return cfg_; }
  double alpha() const { return stack_.alpha; }
  double upper() const { return u_; }
  bool uses_dense_inverse() const { return static_cast<bool>(inverse_); }

  /// x = x0, y = Dbar x0, yhat = 0.
  AdmmState initial_state(const Eigen::Ref<const Eigen::VectorXd>& x0) const;
  AdmmState initial_state() const;

  Eigen::VectorXd x_update(const AdmmState& s) const;
  void y_update(AdmmState& s, double lambda) const;
  void dual_update(AdmmState& s) const;

  /// One full x / y / dual cycle; refreshes the residuals.
  void iterate(AdmmState& s, double lambda) const;
  /// Exactly M cycles from the given (warm) state.
  void partial(AdmmState& s, double lambda, int cycles) const;
  /// Iterates until both residual tests pass or max_outer_iter is reached.
  AdmmResult solve(double lambda, AdmmState warm) const;
  AdmmResult solve(double lambda) const { return solve(lambda, initial_state()); }

  CostBreakdown cost(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda) const;
  bool residuals_converged(const AdmmState& s) const;

 private:
  const ForwardOperator* op_;
  Eigen::VectorXd m_;
  Eigen::VectorXd data_rhs_;  // (2/n) H^t m
  DerivativeStack stack_;
  double u_;
  AdmmConfig cfg_;
  std::shared_ptr<const NormalInverse> inverse_;
};

// Free-function spellings of the solver steps.
Eigen::VectorXd admm_x_update(const AdmmProblem& p, const AdmmState& s);
void admm_y_update(const AdmmProblem& p, AdmmState& s, double lambda);
void admm_dual_update(const AdmmProblem& p, AdmmState& s);
AdmmResult admm_solve(const ForwardOperator& op, const Eigen::VectorXd& m, double lambda, double alpha, double u,
                      const AdmmConfig& cfg, const Eigen::VectorXd& x0);
void admm_partial(const AdmmProblem& p, AdmmState& s, double lambda, int cycles);

}  // namespace pat
