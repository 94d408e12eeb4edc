#include "pat/tracking.hpp"

#include "pat/error.hpp"
#include "pat/group_ops.hpp"

#include <fmt/format.h>

#include <cmath>
#include <ostream>

namespace pat {

RestartPolicy parse_restart_policy(const std::string& name) {
  if (name == "resume" || name == "resume-below") return RestartPolicy::ResumeBelow;
  if (name == "full" || name == "full-search") return RestartPolicy::FullSearch;
  throw Error(ErrorKind::Config, "unknown restart policy '" + name + "'");
}

void TrackingConfig::validate() const {
  require(epsilon > 0.0, ErrorKind::Config, "epsilon must be positive");
  require(k > 1.0, ErrorKind::Config, "k must exceed 1");
  require(delta > 0.0 && delta < 0.5, ErrorKind::DeltaOutOfRange, "delta must lie in (0, 0.5)");
  require(M >= 1, ErrorKind::Config, "M must be at least 1");
  require(epsilon_t > 0.0, ErrorKind::Config, "epsilon_t must be positive");
  require(!lambda0 || *lambda0 > 0.0, ErrorKind::Config, "lambda0 must be positive");
  require(lambda_cap_factor > 1.0, ErrorKind::Config, "lambda cap factor must exceed 1");
  require(max_rounds >= 1, ErrorKind::Config, "max_rounds must be at least 1");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::Config, "alpha must lie in [0, 1]");
  require(u > 0.0, ErrorKind::Config, "u must be positive");
}

double relative_smoothness(double data_reduced, double data_full, double lambda_reg) {
  const double denom = 0.5 * (data_reduced + data_full) + lambda_reg;
  if (denom == 0.0) throw Error(ErrorKind::DegenerateCost, "both costs are zero");
  return std::abs(data_reduced - data_full) / denom;
}

SmoothnessTerms relative_smoothness(const Eigen::Ref<const Eigen::VectorXd>& x, double lambda,
                                    const OperatorSplit& split, const Eigen::Ref<const Eigen::VectorXd>& m_f,
                                    double alpha) {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "lambda must be non-negative");
  require(x.size() == split.full.cols(), ErrorKind::DimensionMismatch, "image size does not match operator");
  require(m_f.size() == split.full.rows(), ErrorKind::DimensionMismatch, "full measurement length mismatch");
  const Eigen::VectorXd residual = m_f - split.full.matrix * x;
  double kept = 0.0;
  for (const Eigen::Index r : split.kept_rows) kept += residual[r] * residual[r];
  SmoothnessTerms t;
  t.lambda = lambda;
  t.data_full = residual.squaredNorm() / static_cast<double>(residual.size());
  t.data_reduced = kept / static_cast<double>(split.kept_rows.size());
  t.reg = eval_rhc(DerivativeStack{{split.full.grid.nx, split.full.grid.ny}, alpha}, x);
  t.value = relative_smoothness(t.data_reduced, t.data_full, lambda * t.reg);
  return t;
}

double lambda_scale(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double alpha) {
  require(m.size() == op.rows(), ErrorKind::DimensionMismatch, "measurement length mismatch");
  const Eigen::VectorXd g = op.matrix.transpose() * m;
  const double hg = (op.matrix * g).squaredNorm();
  if (hg == 0.0) return 0.0;
  const Eigen::VectorXd x = (g.squaredNorm() / hg) * g;
  const double reg = eval_rhc(DerivativeStack{{op.grid.nx, op.grid.ny}, alpha}, x);
  if (reg == 0.0) return 0.0;
  return m.squaredNorm() / static_cast<double>(m.size()) / reg;
}

double default_lambda0(const ForwardOperator& op, const Eigen::Ref<const Eigen::VectorXd>& m, double alpha) {
  const double scale = lambda_scale(op, m, alpha);
  return std::isfinite(scale) && scale > 0.0 ? 1e-4 * scale : 1e-6;
}

std::string to_string(ProbeKind kind) { return kind == ProbeKind::Search ? "search" : "refine"; }

void write_probe_header(std::ostream& os) {
  os << "round,probe_index,lambda,s_tilde,data_term_reduced,data_term_full,reg_term,cumulative_admm_iters,kind\n";
}

void write_probe_row(std::ostream& os, const Probe& p) {
  os << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{}\n", p.round, p.index, p.lambda, p.s_tilde,
                    p.data_reduced, p.data_full, p.reg, p.cumulative_admm_iters, to_string(p.kind));
}

SearchOutcome geometric_search(double lambda0, double k, double epsilon, double lambda_cap,
                               const std::function<double(double)>& s_of_lambda) {
  require(lambda0 > 0.0 && k > 1.0 && epsilon > 0.0, ErrorKind::InvalidArgument, "invalid search settings");
  SearchOutcome out;
  for (int i = 0;; ++i) {
    const double lambda = lambda0 * std::pow(k, i);
    if (lambda > lambda_cap)
      throw Error(ErrorKind::CapExceeded,
                  fmt::format("no lambda up to the cap {:.6g} reached S <= {} ({} probes)", lambda_cap, epsilon, i));
    const double s = s_of_lambda(lambda);
    out.lambdas.push_back(lambda);
    out.values.push_back(s);
    if (s <= epsilon) {
      if (i == 0)
        throw Error(ErrorKind::Lambda0TooLarge,
                    fmt::format("S({:.6g}) = {:.6g} is already below epsilon = {}", lambda, s, epsilon));
      out.accepted = i;
      return out;
    }
  }
}

namespace {

Probe make_probe(int index, const SmoothnessTerms& t, const AdmmState& s, ProbeKind kind) {
  return {0, index, t.lambda, t.value, t.data_reduced, t.data_full, t.reg, s.iterations, kind};
}

ImageGrid as_image(const ForwardOperator& op, const Eigen::VectorXd& x) {
  return ImageGrid(op.grid.nx, op.grid.ny, op.grid.spacing_mm, x);
}

}  // namespace

TrackOutcome track_full(const Eigen::VectorXd& x0, double lambda0, double k, const OperatorSplit& split,
                        const Eigen::VectorXd& m, const Eigen::VectorXd& m_f, double alpha, double epsilon, double u,
                        const AdmmConfig& cfg, double lambda_cap) {
  const AdmmProblem problem(split.reduced, m, alpha, u, cfg);
  TrackOutcome out;
  Eigen::VectorXd warm = x0;
  const auto search = geometric_search(lambda0, k, epsilon, lambda_cap, [&](double lambda) {
    AdmmResult r = problem.solve(lambda, problem.initial_state(warm));
    warm = r.state.x;
    const SmoothnessTerms t = relative_smoothness(r.state.x, lambda, split, m_f, alpha);
    out.probes.push_back(make_probe(static_cast<int>(out.probes.size()), t, r.state, ProbeKind::Search));
    out.state = std::move(r.state);
    return t.value;
  });
  out.lambda = search.lambda();
  out.image = as_image(split.reduced, out.state.x);
  return out;
}

TrackOutcome track_partial(AdmmState state, double lambda0, double k, const OperatorSplit& split,
                           const Eigen::VectorXd& m, const Eigen::VectorXd& m_f, double alpha, double epsilon,
                           double u, const AdmmConfig& cfg, int M, double lambda_cap) {
  require(M >= 1, ErrorKind::InvalidArgument, "M must be at least 1");
  const AdmmProblem problem(split.reduced, m, alpha, u, cfg);
  TrackOutcome out;
  const auto search = geometric_search(lambda0, k, epsilon, lambda_cap, [&](double lambda) {
    problem.partial(state, lambda, M);
    const SmoothnessTerms t = relative_smoothness(state.x, lambda, split, m_f, alpha);
    out.probes.push_back(make_probe(static_cast<int>(out.probes.size()), t, state, ProbeKind::Search));
    return t.value;
  });
  out.lambda = search.lambda();
  out.image = as_image(split.reduced, state.x);
  out.state = std::move(state);
  return out;
}

TrackingResult track_and_reconstruct(const OperatorSplit& split, const Eigen::VectorXd& m_f,
                                     const TrackingConfig& cfg, std::ostream* probe_log) {
  cfg.validate();
  require(m_f.size() == split.full.rows(), ErrorKind::DimensionMismatch, "full measurement length mismatch");
  const Eigen::VectorXd m = split.reduce(m_f);
  const ForwardOperator& op = split.reduced;
  TrackingResult res;
  res.lambda0 = cfg.lambda0.value_or(default_lambda0(op, m, cfg.alpha));

  if (m_f.squaredNorm() == 0.0) {
    res.image = ImageGrid::zeros(op.grid.nx, op.grid.ny, op.grid.spacing_mm);
    res.lambda = res.lambda0;
    res.rounds = 1;
    res.converged = true;
    return res;
  }

  const AdmmProblem problem(op, m, cfg.alpha, cfg.u, cfg.admm);
  auto log_round = [&](std::vector<Probe>& probes, int round) {
    for (auto& p : probes) {
      p.round = round;
      if (probe_log) write_probe_row(*probe_log, p);
      res.probes.push_back(p);
    }
  };

  // First round: halve lambda_0 until the first probe sits above epsilon.
  std::optional<TrackOutcome> first;
  double lambda0 = res.lambda0;
  for (int halvings = 0; halvings <= 20 && !first; ++halvings) {
    try {
      first = track_partial(problem.initial_state(), lambda0, cfg.k, split, m, m_f, cfg.alpha, cfg.epsilon, cfg.u,
                            cfg.admm, cfg.M, cfg.lambda_cap_factor * lambda0);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Lambda0TooLarge) throw;
      if (halvings < 20) lambda0 *= 0.5;
    }
  }
  if (!first) {
    // Even the smallest start is smooth enough (e.g. noiseless data): accept
    // it and only refine.
    TrackOutcome t;
    t.state = problem.initial_state();
    problem.partial(t.state, lambda0, cfg.M);
    t.lambda = lambda0;
    t.probes.push_back(
        make_probe(0, relative_smoothness(t.state.x, lambda0, split, m_f, cfg.alpha), t.state, ProbeKind::Refine));
    first = std::move(t);
  }
  res.lambda0 = lambda0;
  const double lambda_cap = cfg.lambda_cap_factor * lambda0;
  AdmmState state = std::move(first->state);
  double lambda_hat = first->lambda;
  log_round(first->probes, 1);
  res.rounds = 1;

  Eigen::VectorXd x_prev = Eigen::VectorXd::Zero(op.cols());
  auto relative_change = [&] {
    const double base = x_prev.norm();
    const double diff = (state.x - x_prev).norm();
    return base > 0.0 ? diff / base : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  };
  res.last_relative_change = relative_change();

  while (res.last_relative_change > cfg.epsilon_t && res.rounds < cfg.max_rounds) {
    x_prev = state.x;
    const double start = cfg.restart == RestartPolicy::ResumeBelow ? lambda_hat / (cfg.k * cfg.k) : lambda0;
    ++res.rounds;
    try {
      TrackOutcome next = track_partial(state, start, cfg.k, split, m, m_f, cfg.alpha, cfg.epsilon, cfg.u, cfg.admm,
                                        cfg.M, lambda_cap);
      state = std::move(next.state);
      lambda_hat = next.lambda;
      log_round(next.probes, res.rounds);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Lambda0TooLarge) throw;
      // The restart point is already smooth enough: keep lambda_hat and refine.
      problem.partial(state, lambda_hat, cfg.M);
      std::vector<Probe> refine{make_probe(0, relative_smoothness(state.x, lambda_hat, split, m_f, cfg.alpha), state,
                                           ProbeKind::Refine)};
      log_round(refine, res.rounds);
    }
    res.last_relative_change = relative_change();
  }

  res.converged = res.last_relative_change <= cfg.epsilon_t;
  res.lambda = lambda_hat;
  res.s_tilde = relative_smoothness(state.x, lambda_hat, split, m_f, cfg.alpha).value;
  res.admm_iterations = state.iterations;
  res.image = as_image(op, state.x);
  return res;
}

}  // namespace pat
