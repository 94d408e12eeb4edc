#pragma once

#include "pat/admm.hpp"
#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"
#include "pat/ssim.hpp"
#include "pat/tracking.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace pat {

/// SSIM of two image grids of the same shape.
double ssim(const ImageGrid& recon, const ImageGrid& truth, const SsimConfig& cfg = {});

enum class Regularizer {
  AR,   ///< augmented regularizer, alpha = 0.5
  TV2,  ///< second-order TV, alpha = 0
};

double regularizer_alpha(Regularizer r);
std::string to_string(Regularizer r);

struct OracleResult {
  double best_lambda = 0.0;
  double best_ssim = -1.0;
  std::vector<std::pair<double, double>> grid;  ///< (lambda, SSIM), increasing lambda
  ImageGrid best_image;
  long admm_iterations = 0;
};

/// `points` log-spaced values over [lo, hi] * scale.
std::vector<double> log_grid(double scale, int points = 25, double lo = 1e-7, double hi = 1e-1);

/// Full ADMM solve per grid value, keeping the best SSIM against `truth`.
/// Solves run from the largest lambda down, each warm-started from the
/// previous solution; ties go to the smaller lambda.
OracleResult oracle_tune(const ForwardOperator& op, const Eigen::VectorXd& m, const ImageGrid& truth, double alpha,
                         const std::vector<double>& lambda_grid, double u = 1.0, const AdmmConfig& cfg = {},
                         const SsimConfig& ssim_cfg = {});

/// Oracle tuning over the default grid log_grid(lambda_scale(op, m, alpha)).
OracleResult oracle_tune(const ForwardOperator& op, const Eigen::VectorXd& m, const ImageGrid& truth,
                         Regularizer mode, double u = 1.0, const AdmmConfig& cfg = {},
                         const SsimConfig& ssim_cfg = {});

struct ComparisonOptions {
  bool ar_tr = true;
  bool ar_o = true;
  bool tv2_o = true;
  int oracle_points = 25;
  double oracle_lo = 1e-7;
  double oracle_hi = 1e-1;
  AdmmConfig oracle_admm;
  SsimConfig ssim;
};

struct ComparisonRow {
  std::string phantom;
  double snr_db = 0.0;
  double ssim_ar_tr = 0.0;
  double ssim_tv2_o = 0.0;
  double ssim_ar_o = 0.0;
  double lambda_tr = 0.0;
  int rounds = 0;
  double wall_s = 0.0;
  double lambda_ar_o = 0.0;
  double lambda_tv2_o = 0.0;
  bool tracking_converged = false;
  double s_tilde = 0.0;
};

struct Comparison {
  ComparisonRow row;
  TrackingResult tracking;
  OracleResult ar_o;
  OracleResult tv2_o;
};

/// Runs AR-TR on the reduced data and the two oracle baselines on the full
/// data (H_f, m_f) and scores them against `truth`. Methods switched off in
/// `opt` report NaN.
Comparison compare_methods(const ImageGrid& truth, const OperatorSplit& split, const Eigen::VectorXd& m_f,
                           const TrackingConfig& tracking, const ComparisonOptions& opt = {},
                           std::ostream* probe_log = nullptr);

void write_results_header(std::ostream& os);
void write_results_row(std::ostream& os, const ComparisonRow& row);
/// Parses a row written by write_results_row.
ComparisonRow parse_results_row(const std::string& line);

}  // namespace pat
