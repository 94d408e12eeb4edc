#pragma once

// Semi-automatic choice of the regularization weight. Rows are removed from
// the full operator H_f to get H; at a reconstruction x(lambda) from (H, m),
//
//   S(lambda) = |J_f - J| / (0.5 (J_f + J))
//
// with the bound-free costs J = (1/n)||m - Hx||^2 + lambda R and
// J_f = (1/n_f)||m_f - H_f x||^2 + lambda R. S is expected to fall as lambda
// grows, and the tracked weight is the first lambda_i = lambda_0 k^i with
// S <= epsilon. S-tilde is the same quantity evaluated after M warm-started
// ADMM cycles instead of a full solve.

#include "pat/admm.hpp"
#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pat {

enum class RestartPolicy {
  /// Next round starts at lambda_hat / k^2.
  ResumeBelow,
  /// Next round repeats the search from the first round's lambda_0.
  FullSearch,
};

RestartPolicy parse_restart_policy(const std::string& name);

struct TrackingConfig {
  double epsilon = 0.06;
  double delta = 0.1;
  double k = 1.05;
  int M = 50;
  double epsilon_t = 1e-4;
  /// Scale-aware default when unset (see default_lambda0).
  std::optional<double> lambda0;
  /// Probes above lambda_cap_factor * lambda_0 abort the search.
  double lambda_cap_factor = 1e6;
  int max_rounds = 50;
  RestartPolicy restart = RestartPolicy::ResumeBelow;
  SplitScheme scheme = SplitScheme::UniformStride;
  std::uint64_t split_seed = 0;
  double alpha = 0.5;
  double u = 1.0;
  AdmmConfig admm;

  void validate() const;
};

/// The two data terms and the shared regularizer behind one S evaluation.
struct SmoothnessTerms {
  double data_reduced = 0.0;  ///< (1/n) ||m - H x||^2
  double data_full = 0.0;     ///< (1/n_f) ||m_f - H_f x||^2
  double reg = 0.0;           ///< R_hc(x, alpha)
  double lambda = 0.0;
  double value = 0.0;
};

/// |a - b| / (0.5 (a + b) + lambda_reg) for data terms a, b and the common
/// lambda * R. Throws DegenerateCost when both costs are zero.
double relative_smoothness(double data_reduced, double data_full, double lambda_reg);

/// Evaluates S at x. The reduced residual is read off the full one, since the
/// rows of H are copies of rows of H_f.
SmoothnessTerms relative_smoothness(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda,
                                    const OperatorSplit& split, const Eigen::Ref<const Eigen::VectorXd>& m_f,
                                    double alpha);

/// (1/n)||m||^2 / R_hc(c H^t m, alpha) with c = ||H^t m||^2 / ||H H^t m||^2, the
/// step that minimises the data term along H^t m. Zero when m = 0.
double lambda_scale(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double alpha);

/// 1e-4 * lambda_scale, or 1e-6 when the scale is not usable.
double default_lambda0(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double alpha);

enum class ProbeKind {
  Search,  ///< part of a geometric search
  Refine,  ///< extra cycles at a kept lambda_hat when the restart did not re-arm
};

std::string to_string(ProbeKind kind);

struct Probe {
  int round = 0;
  int index = 0;  ///< position within its round
  double lambda = 0.0;
  double s_tilde = 0.0;
  double data_reduced = 0.0;
  double data_full = 0.0;
  double reg = 0.0;
  long cumulative_admm_iters = 0;
  ProbeKind kind = ProbeKind::Search;
};

/// Header and rows for the probe log CSV.
void write_probe_header(std::ostream& os);
void write_probe_row(std::ostream& os, const Probe& p);

/// Outcome of one geometric search: index m of the accepted lambda and the
/// S value of every probe in order.
struct SearchOutcome {
  int accepted = 0;
  std::vector<double> lambdas;
  std::vector<double> values;
  double lambda() const { return lambdas.at(static_cast<std::size_t>(accepted)); }
};

/// Probes lambda_i = lambda0 k^i until s_of_lambda(lambda_i) <= epsilon.
/// Throws Lambda0TooLarge if the very first probe is already below epsilon and
/// CapExceeded once lambda_i exceeds lambda_cap.
SearchOutcome geometric_search(double lambda0, double k, double epsilon, double lambda_cap,
                               const std::function<double(double)>& s_of_lambda);

struct TrackOutcome {
  ImageGrid image;
  double lambda = 0.0;
  AdmmState state;
  std::vector<Probe> probes;
};

/// Figure-1 style tracking: every probe is a full ADMM solve (warm-started
/// from the previous probe's solution).
TrackOutcome track_full(const Eigen::VectorXd& x0, double lambda0, double k, const OperatorSplit& split,
                        const Eigen::VectorXd& m, const Eigen::VectorXd& m_f, double alpha, double epsilon, double u,
                        const AdmmConfig& cfg, double lambda_cap);

/// Partial-reconstruction tracking: M ADMM cycles per probe, with the solver
/// state carried from probe to probe. Starts from `state`.
TrackOutcome track_partial(AdmmState state, double lambda0, double k, const OperatorSplit& split,
                           const Eigen::VectorXd& m, const Eigen::VectorXd& m_f, double alpha, double epsilon,
                           double u, const AdmmConfig& cfg, int M, double lambda_cap);

struct TrackingResult {
  ImageGrid image;
  double lambda = 0.0;
  double lambda0 = 0.0;
  double s_tilde = 0.0;  ///< S-tilde at the returned image and lambda
  std::vector<Probe> probes;
  int rounds = 0;
  long admm_iterations = 0;
  bool converged = false;
  double last_relative_change = 0.0;
};

/// Repeats partial tracking, feeding each (x_hat, lambda_hat) into the next
/// round, until the relative image change drops to epsilon_t or max_rounds is
/// reached (converged = false). `probe_log`, when set, receives CSV rows.
TrackingResult track_and_reconstruct(const OperatorSplit& split, const Eigen::VectorXd& m_f,
                                     const TrackingConfig& cfg, std::ostream* probe_log = nullptr);

}  // namespace pat
