#include "pat/metrics.hpp"

#include "pat/error.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace pat {

double ssim(const ImageGrid& recon, const ImageGrid& truth, const SsimConfig& cfg) {
  require(recon.same_shape(truth), ErrorKind::DimensionMismatch, "SSIM inputs differ in shape");
  return ssim(ImageShape{truth.nx, truth.ny}, recon.values, truth.values, cfg);
}

double regularizer_alpha(Regularizer r) { return r == Regularizer::AR ? 0.5 : 0.0; }

std::string to_string(Regularizer r) { return r == Regularizer::AR ? "AR" : "TV2"; }

std::vector<double> log_grid(double scale, int points, double lo, double hi) {
  require(points >= 1 && lo > 0.0 && hi >= lo && scale > 0.0, ErrorKind::InvalidArgument, "invalid lambda grid");
  std::vector<double> grid(static_cast<std::size_t>(points));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    grid[static_cast<std::size_t>(i)] = scale * std::pow(10.0, a + t * (b - a));
  }
  return grid;
}

OracleResult oracle_tune(const ForwardOperator& op, const Eigen::VectorXd& m, const ImageGrid& truth, double alpha,
                         const std::vector<double>& lambda_grid, double u, const AdmmConfig& cfg,
                         const SsimConfig& ssim_cfg) {
  require(!lambda_grid.empty(), ErrorKind::InvalidArgument, "oracle grid is empty");
  for (std::size_t i = 1; i < lambda_grid.size(); ++i)
    require(lambda_grid[i] > lambda_grid[i - 1], ErrorKind::InvalidArgument, "oracle grid must be increasing");
  require(truth.nx == op.grid.nx && truth.ny == op.grid.ny, ErrorKind::DimensionMismatch, "truth shape mismatch");

  const AdmmProblem problem(op, m, alpha, u, cfg);
  OracleResult out;
  out.grid.resize(lambda_grid.size());
  AdmmState warm = problem.initial_state();
  for (std::size_t i = lambda_grid.size(); i-- > 0;) {
    const double lambda = lambda_grid[i];
    warm.iterations = 0;
    AdmmResult r = problem.solve(lambda, std::move(warm));
    out.admm_iterations += r.state.iterations;
    const double score = ssim(r.image, truth, ssim_cfg);
    out.grid[i] = {lambda, score};
    if (score >= out.best_ssim) {
      out.best_ssim = score;
      out.best_lambda = lambda;
      out.best_image = r.image;
    }
    warm = std::move(r.state);
  }
  return out;
}

OracleResult oracle_tune(const ForwardOperator& op, const Eigen::VectorXd& m, const ImageGrid& truth,
                         Regularizer mode, double u, const AdmmConfig& cfg, const SsimConfig& ssim_cfg) {
  const double alpha = regularizer_alpha(mode);
  const double scale = lambda_scale(op, m, alpha);
  return oracle_tune(op, m, truth, alpha, log_grid(scale > 0.0 ? scale : 1.0), u, cfg, ssim_cfg);
}

Comparison compare_methods(const ImageGrid& truth, const OperatorSplit& split, const Eigen::VectorXd& m_f,
                           const TrackingConfig& tracking, const ComparisonOptions& opt, std::ostream* probe_log) {
  const auto start = std::chrono::steady_clock::now();
  Comparison c;
  ComparisonRow& row = c.row;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  row.ssim_ar_tr = row.ssim_ar_o = row.ssim_tv2_o = nan;
  row.lambda_tr = row.lambda_ar_o = row.lambda_tv2_o = row.s_tilde = nan;

  if (opt.ar_tr) {
    c.tracking = track_and_reconstruct(split, m_f, tracking, probe_log);
    row.ssim_ar_tr = ssim(c.tracking.image, truth, opt.ssim);
    row.lambda_tr = c.tracking.lambda;
    row.rounds = c.tracking.rounds;
    row.tracking_converged = c.tracking.converged;
    row.s_tilde = c.tracking.s_tilde;
  }
  auto oracle = [&](Regularizer mode) {
    const double alpha = regularizer_alpha(mode);
    double scale = lambda_scale(split.full, m_f, alpha);
    if (!(scale > 0.0)) scale = 1.0;
    return oracle_tune(split.full, m_f, truth, alpha, log_grid(scale, opt.oracle_points, opt.oracle_lo, opt.oracle_hi),
                       tracking.u, opt.oracle_admm, opt.ssim);
  };
  if (opt.ar_o) {
    c.ar_o = oracle(Regularizer::AR);
    row.ssim_ar_o = c.ar_o.best_ssim;
    row.lambda_ar_o = c.ar_o.best_lambda;
  }
  if (opt.tv2_o) {
    c.tv2_o = oracle(Regularizer::TV2);
    row.ssim_tv2_o = c.tv2_o.best_ssim;
    row.lambda_tv2_o = c.tv2_o.best_lambda;
  }
  row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

void write_results_header(std::ostream& os) {
  os << "phantom,snr_db,ssim_ar_tr,ssim_tv2_o,ssim_ar_o,lambda_tr,rounds,wall_s,lambda_ar_o,lambda_tv2_o,"
        "tracking_converged,s_tilde\n";
}

void write_results_row(std::ostream& os, const ComparisonRow& r) {
  os << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.3f},{:.17g},{:.17g},{},{:.17g}\n", r.phantom,
                    r.snr_db, r.ssim_ar_tr, r.ssim_tv2_o, r.ssim_ar_o, r.lambda_tr, r.rounds, r.wall_s, r.lambda_ar_o,
                    r.lambda_tv2_o, r.tracking_converged ? 1 : 0, r.s_tilde);
}

ComparisonRow parse_results_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
  if (f.size() != 12) throw Error(ErrorKind::Io, "malformed results row: " + line);
  try {
    ComparisonRow r;
    r.phantom = f[0];
    r.snr_db = std::stod(f[1]);
    r.ssim_ar_tr = std::stod(f[2]);
    r.ssim_tv2_o = std::stod(f[3]);
    r.ssim_ar_o = std::stod(f[4]);
    r.lambda_tr = std::stod(f[5]);
    r.rounds = std::stoi(f[6]);
    r.wall_s = std::stod(f[7]);
    r.lambda_ar_o = std::stod(f[8]);
    r.lambda_tv2_o = std::stod(f[9]);
    r.tracking_converged = f[10] == "1";
    r.s_tilde = std::stod(f[11]);
    return r;
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Io, "malformed results row: " + line);
  }
}

}  // namespace pat
