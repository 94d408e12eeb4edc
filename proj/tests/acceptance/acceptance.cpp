// Acceptance runner: one PASS/FAIL line per criterion, supporting CSVs under --out.

#include "pat/admm.hpp"
#include "pat/error.hpp"
#include "pat/experiment.hpp"
#include "pat/group_ops.hpp"
#include "pat/tikhonov.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

using namespace pat;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kAdjointTol = 1e-10;
constexpr double kAdjointSeconds = 30.0;
constexpr double kProxTol = 1e-10;
constexpr double kCostSlack = 1e-4;
constexpr double kSplitTol = 1e-4;
constexpr double kOptimalitySeconds = 120.0;
constexpr double kTikhonovResidual = 1e-8;
constexpr double kTikhonovDense = 1e-6;
constexpr int kMaxInversions = 1;
constexpr double kInversionSize = 0.05;
constexpr double kSmoothnessSeconds = 600.0;
constexpr int kCellsRequired = 11;
constexpr double kOracleGap = 0.03;
constexpr double kGridSeconds = 4 * 3600.0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  out << text;
}

Eigen::VectorXd clipped(const Eigen::VectorXd& x, double u) { return x.cwiseMax(0.0).cwiseMin(u); }

// 1. Adjoint dot-product test and point-source arrival at desk scale.
Verdict operator_correctness(const fs::path& out) {
  const auto t0 = Clock::now();
  const ForwardOperator op = test::small_operator(64, 16, 256, false);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    const Eigen::VectorXd x = test::random_vector(op.cols(), 1000 + k);
    const Eigen::VectorXd y = test::random_vector(op.rows(), 2000 + k);
    const Eigen::VectorXd hx = apply(op, x);
    worst = std::max(worst, std::abs(hx.dot(y) - x.dot(adjoint_vector(op, y))) / (hx.norm() * y.norm()));
  }

  // Odd grid so the centre pixel sits exactly on the rotation centre.
  const GridMeta grid{65, 65, 12.8 / 64};
  TransducerGeometry geo;
  const TimeSampling ts = TimeSampling::covering(grid, geo.radius_mm, 256);
  const ForwardOperator point_op = build_operator(grid, geo, ts);
  ImageGrid img = ImageGrid::zeros(65, 65, grid.spacing_mm);
  img.at(32, 32) = 1.0;
  const Eigen::VectorXd m = apply(point_op, img);
  const double arrival = geo.radius_mm / ts.c0_mm_per_us;
  std::ostringstream csv;
  csv << "transducer,zero_crossing_us,arrival_us,dt_us\n";
  double worst_offset = 0.0;
  for (int i = 0; i < geo.count; ++i) {
    const Eigen::VectorXd trace = m.segment(static_cast<Eigen::Index>(i) * ts.mt, ts.mt);
    // The time derivative of the arc integral changes sign once, at the arrival.
    double crossing = std::numeric_limits<double>::quiet_NaN();
    int last_j = -1;
    const double floor = 1e-9 * trace.cwiseAbs().maxCoeff();
    for (int j = 0; j < ts.mt; ++j) {
      if (std::abs(trace[j]) <= floor) continue;
      if (last_j >= 0 && (trace[j] > 0) != (trace[last_j] > 0)) {
        const double a = trace[last_j], b = trace[j];
        crossing = ts.time(last_j) + (ts.time(j) - ts.time(last_j)) * a / (a - b);
      }
      last_j = j;
    }
    const double offset = std::isnan(crossing) ? std::numeric_limits<double>::infinity() : std::abs(crossing - arrival);
    worst_offset = std::max(worst_offset, offset);
    csv << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", i, crossing, arrival, ts.dt_us);
  }
  write_text(out / "point_source.csv", csv.str());
  const double secs = seconds_since(t0);
  return {worst <= kAdjointTol && worst_offset <= ts.dt_us && secs < kAdjointSeconds,
          fmt::format("adjoint {:.2e} <= {:.0e}, arrival offset {:.3g} us <= dt {:.3g} us, {:.1f} s < {:.0f} s", worst,
                      kAdjointTol, worst_offset, ts.dt_us, secs, kAdjointSeconds)};
}

// 2. Group prox against a line search along z, clipping against a per-coordinate rule.
Verdict prox_clip_oracles() {
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> coord(-3.0, 3.0), thr(0.0, 4.0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Eigen::Vector4d z;
    for (auto& v : z) v = coord(gen);
    const double t = thr(gen);
    worst = std::max(worst, (prox_group(z, t) - oracle::prox_line_search(z, t)).norm());
  }
  const Eigen::VectorXd v = test::random_vector(1000, 7, -1.0, 2.5);
  const double u = 1.3;
  const Eigen::VectorXd c = clip_box(v, u);
  long mismatches = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double expected = v[i] < 0.0 ? 0.0 : (v[i] > u ? u : v[i]);
    if (c[i] != expected) ++mismatches;
  }
  return {worst <= kProxTol && mismatches == 0,
          fmt::format("prox max error {:.2e} <= {:.0e} over 1000 vectors, clip mismatches {}", worst, kProxTol,
                      mismatches)};
}

// 3. ADMM against a long projected-subgradient run on small instances.
Verdict admm_optimality(const fs::path& out) {
  const auto t0 = Clock::now();
  const ForwardOperator op = test::small_operator(12, 4, 64);
  std::ostringstream csv;
  csv << "phantom,alpha,lambda,admm_cost,reference_cost,split_agreement\n";
  double worst_gap = -std::numeric_limits<double>::infinity(), worst_split = 0.0;
  for (auto kind : {PhantomKind::Derenzo, PhantomKind::BloodVessel, PhantomKind::PatText}) {
    const Eigen::VectorXd m = simulate_measurement(op, test::small_phantom(kind, 12), 20, 6).values;
    for (double alpha : {0.0, 0.5}) {
      const double lambda = 1e-3 * lambda_scale(op, m, alpha);
      AdmmConfig cfg;
      cfg.primal_tol = cfg.dual_tol = 1e-8;
      cfg.max_outer_iter = 20000;
      const AdmmResult r = admm_solve(op, m, lambda, alpha, 1.0, cfg, Eigen::VectorXd::Zero(op.cols()));
      const auto ref = oracle::projected_subgradient(op, m, lambda, alpha, 1.0, 10000, 0.5);
      const double j = oracle::cost(op, m, clipped(r.state.x, 1.0), lambda, alpha, 1.0);
      const double split =
          (apply_dbar(DerivativeStack{{12, 12}, alpha}, r.state.x) - r.state.y()).norm() / r.state.y().norm();
      worst_gap = std::max(worst_gap, j - ref.best_cost);
      worst_split = std::max(worst_split, split);
      csv << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", to_string(kind), alpha, lambda, j, ref.best_cost,
                         split);
    }
  }
  write_text(out / "admm_optimality.csv", csv.str());
  const double secs = seconds_since(t0);
  return {worst_gap <= kCostSlack && worst_split <= kSplitTol && secs < kOptimalitySeconds,
          fmt::format("max J - J_ref {:.2e} <= {:.0e}, split {:.2e} <= {:.0e}, {:.1f} s < {:.0f} s", worst_gap,
                      kCostSlack, worst_split, kSplitTol, secs, kOptimalitySeconds)};
}

Eigen::MatrixXd materialize_tikhonov(const ImageShape& shape, int order) {
  const Eigen::Index n = shape.pixels();
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index j = 0; j < n; ++j) a.col(j) = tikhonov_normal(shape, Eigen::VectorXd::Unit(n, j), order);
  return a;
}

// 4. Tikhonov baseline: normal-equation residual and a dense direct solve.
Verdict tikhonov_baseline() {
  double worst_residual = 0.0, worst_dense = 0.0;
  {
    const ForwardOperator op = test::small_operator(32, 16, 256);
    const Eigen::VectorXd m = simulate_measurement(op, test::small_phantom(PhantomKind::Derenzo, 32), 20, 1).values;
    const Eigen::VectorXd rhs = op.matrix.transpose() * m;
    for (int order : {1, 2})
      for (double lambda : {1e-2, 0.5}) {
        const Eigen::VectorXd x = solve_tikhonov(op, m, lambda, order).image.values;
        const Eigen::VectorXd lhs =
            op.matrix.transpose() * (op.matrix * x) + lambda * tikhonov_normal({32, 32}, x, order);
        worst_residual = std::max(worst_residual, (lhs - rhs).norm() / rhs.norm());
      }
  }
  {
    const ForwardOperator op = test::small_operator(16, 8, 96);
    const Eigen::VectorXd m =
        simulate_measurement(op, test::small_phantom(PhantomKind::BloodVessel, 16), 25, 3).values;
    const Eigen::MatrixXd h(op.matrix);
    for (int order : {1, 2})
      for (double lambda : {1e-3, 0.1, 10.0}) {
        const Eigen::MatrixXd a = h.transpose() * h + lambda * materialize_tikhonov({16, 16}, order);
        const Eigen::VectorXd direct = a.ldlt().solve(h.transpose() * m);
        // Tight CG tolerance: the comparison measures the solver, not the stopping rule.
        const Eigen::VectorXd x = solve_tikhonov(op, m, lambda, order, {1e-12, 20000}).image.values;
        worst_dense = std::max(worst_dense, (x - direct).norm() / direct.norm());
      }
  }
  return {worst_residual <= kTikhonovResidual && worst_dense <= kTikhonovDense,
          fmt::format("residual {:.2e} <= {:.0e}, dense mismatch {:.2e} <= {:.0e}", worst_residual, kTikhonovResidual,
                      worst_dense, kTikhonovDense)};
}

struct SeriesPoint {
  double s = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd x;
};

// Penalty following the weight in units of the data scale, rounded to a power
// of ten so the cached x-step inverses are shared; the minimizer does not
// depend on it, only the cycle count does.
double matched_beta(double lambda, double scale) {
  return std::clamp(std::pow(10.0, std::round(std::log10(2.0 * lambda / scale))), 0.005, 5.0);
}

// S at a fully converged reconstruction from the reduced data.
SeriesPoint converged_s(const OperatorSplit& split, const Eigen::VectorXd& m_f, double lambda, double alpha,
                        double scale, const Eigen::VectorXd& x0) {
  AdmmConfig cfg;
  cfg.beta = matched_beta(lambda, scale);
  cfg.primal_tol = cfg.dual_tol = 1e-6;
  cfg.max_outer_iter = 50000;
  AdmmResult r = admm_solve(split.reduced, split.reduce(m_f), lambda, alpha, 1.0, cfg, x0);
  const double s = relative_smoothness(r.state.x, lambda, split, m_f, alpha).value;
  return {s, r.state.iterations, r.converged, std::move(r.state.x)};
}

struct SmoothnessRun {
  std::string csv;
  int inversions = 0;
  double largest_inversion = 0.0;
  bool all_converged = true;
};

SmoothnessRun smoothness_series(double snr_db) {
  const ForwardOperator op = test::small_operator(32, 16, 64);
  const OperatorSplit split = split_rows(op, 0.1);
  const Eigen::VectorXd m_f =
      simulate_measurement(op, test::small_phantom(PhantomKind::Derenzo, 32), snr_db, 11).values;
  const double alpha = 0.5;
  const double scale = lambda_scale(split.reduced, split.reduce(m_f), alpha);
  const std::vector<double> lambdas = log_grid(scale, 10, 1e-6, 1e-1);
  std::vector<SeriesPoint> p;
  for (const double lambda : lambdas)
    p.push_back(converged_s(split, m_f, lambda, alpha, scale, Eigen::VectorXd::Zero(op.cols())));
  SmoothnessRun run;
  for (std::size_t i = 0; i < p.size(); ++i) {
    run.csv += fmt::format("{},{:.17g},{:.17g},{},{}\n", snr_db, lambdas[i], p[i].s, p[i].iterations,
                           p[i].converged ? 1 : 0);
    run.all_converged = run.all_converged && p[i].converged;
    if (i > 0 && p[i].s > p[i - 1].s) {
      ++run.inversions;
      run.largest_inversion = std::max(run.largest_inversion, (p[i].s - p[i - 1].s) / p[i - 1].s);
    }
  }
  return run;
}

// 5. S over a geometric grid falls with lambda.
Verdict smoothness_trend(const fs::path& out) {
  const auto t0 = Clock::now();
  std::string csv = "snr_db,lambda,s,admm_iterations,converged\n";
  bool ok = true;
  std::string detail;
  for (double snr : {15.0, 25.0}) {
    const SmoothnessRun run = smoothness_series(snr);
    csv += run.csv;
    ok = ok && run.all_converged && run.inversions <= kMaxInversions && run.largest_inversion <= kInversionSize;
    detail += fmt::format("{} dB: {} inversions (largest {:.1f}%){}; ", snr, run.inversions,
                          100 * run.largest_inversion, run.all_converged ? "" : ", unconverged solves");
  }
  write_text(out / "smoothness.csv", csv);
  const double secs = seconds_since(t0);
  return {ok && secs < kSmoothnessSeconds,
          detail + fmt::format("limit {} of <= {:.0f}%, {:.1f} s < {:.0f} s", kMaxInversions, 100 * kInversionSize, secs,
                               kSmoothnessSeconds)};
}

// Desk-scale plan: 64 x 64 grid, 16 transducers x 256 samples, protocol
// tracking parameters in every cell.
ExperimentPlan desk_plan(const fs::path& out, int jobs, int size, int samples) {
  ExperimentPlan plan = ExperimentPlan::defaults();
  apply_settings(plan, {{"size", std::to_string(size)}, {"samples", std::to_string(samples)}});
  plan.out_dir = out;
  plan.jobs = jobs;
  return plan;
}

struct GridRun {
  GridReport report;
  double seconds = 0.0;
};

// 7. The full comparison grid.
Verdict comparison_trend(const GridRun& run) {
  const auto& rows = run.report.rows;
  int beats = 0, close = 0;
  for (const auto& r : rows) {
    if (r.ssim_ar_tr >= r.ssim_tv2_o) ++beats;
    if (r.ssim_ar_o - r.ssim_ar_tr <= kOracleGap) ++close;
  }
  const bool ok = run.report.failures.empty() && beats >= kCellsRequired && close >= kCellsRequired &&
                  run.seconds < kGridSeconds;
  std::string detail = fmt::format("AR-TR >= TV2-O in {}/{}, AR-O - AR-TR <= {} in {}/{} (need {}), {:.0f} s < {:.0f} s",
                                   beats, rows.size(), kOracleGap, close, rows.size(), kCellsRequired, run.seconds,
                                   kGridSeconds);
  for (const auto& f : run.report.failures) detail += "; failed " + f;
  return {ok, detail};
}

// Log-space bisection for the lambda where converged S crosses epsilon.
double bisection_root(const OperatorSplit& split, const Eigen::VectorXd& m_f, double alpha, double epsilon,
                      double guess, std::ostream& log, const std::string& label) {
  const double scale = lambda_scale(split.reduced, split.reduce(m_f), alpha);
  // Each solve starts from the previous solution; the order is fixed, so the
  // sequence is reproducible.
  Eigen::VectorXd warm = Eigen::VectorXd::Zero(split.full.cols());
  auto s_of = [&](double lambda) {
    SeriesPoint p = converged_s(split, m_f, lambda, alpha, scale, warm);
    log << fmt::format("{},{:.17g},{:.17g},{},{}\n", label, lambda, p.s, p.iterations, p.converged ? 1 : 0);
    warm = std::move(p.x);
    return p.s;
  };
  double lo = guess / 1.25, hi = guess * 1.25;
  for (int i = 0; i < 40 && s_of(lo) <= epsilon; ++i) lo /= 2.0;
  for (int i = 0; i < 40 && s_of(hi) > epsilon; ++i) hi *= 2.0;
  while (hi / lo > 1.01) {
    const double mid = std::sqrt(lo * hi);
    (s_of(mid) > epsilon ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

// 6. Tracked lambda against the converged-S root on the 20 dB grid cells.
Verdict tracking_fidelity(const ExperimentPlan& plan, const GridRun& run, const fs::path& out) {
  const ForwardOperator op = load_or_build_operator(plan.scanner, plan.out_dir / "cache");
  const OperatorSplit split = split_rows(op, plan.tracking.delta, plan.tracking.scheme, plan.tracking.split_seed);
  const double k = plan.tracking.k;
  std::ostringstream probes, csv;
  probes << "phantom,lambda,s,admm_iterations,converged\n";
  csv << "phantom,lambda_tracked,lambda_root,ratio\n";
  int within = 0, total = 0;
  std::string detail;
  for (const auto& spec : plan.phantoms) {
    const std::string label = phantom_label(spec);
    const auto row = std::find_if(run.report.rows.begin(), run.report.rows.end(),
                                  [&](const ComparisonRow& r) { return r.phantom == label && r.snr_db == 20.0; });
    ++total;
    if (row == run.report.rows.end()) {
      detail += label + " missing; ";
      continue;
    }
    const Eigen::VectorXd m_f = read_measurement(plan.out_dir / "cells" / (label + "_20dB") / "measurement.patm").values;
    const double root =
        bisection_root(split, m_f, plan.tracking.alpha, plan.tracking.epsilon, row->lambda_tr, probes, label);
    const double ratio = row->lambda_tr / root;
    if (ratio <= k * k && ratio >= 1.0 / (k * k)) ++within;
    csv << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", label, row->lambda_tr, root, ratio);
    detail += fmt::format("{} ratio {:.4f}; ", label, ratio);
  }
  write_text(out / "tracking_fidelity.csv", csv.str());
  write_text(out / "tracking_bisection.csv", probes.str());
  return {within == total && total == 3,
          detail + fmt::format("{}/{} within [1/k^2, k^2] = [{:.4f}, {:.4f}]", within, total, 1.0 / (k * k), k * k)};
}

// Row text with the wall-clock column blanked.
std::string row_without_wall(const fs::path& file) {
  std::istringstream in(slurp(file));
  std::string header, line, out;
  std::getline(in, header);
  while (std::getline(in, line)) {
    ComparisonRow r = parse_results_row(line);
    r.wall_s = 0.0;
    std::ostringstream os;
    write_results_row(os, r);
    out += os.str();
  }
  return out;
}

// 8. A re-run of one grid cell and of one smoothness series reproduces every CSV number.
Verdict determinism(const ExperimentPlan& plan, const fs::path& out, const fs::path& smoothness_csv) {
  ExperimentPlan again = plan;
  again.out_dir = out / "rerun";
  fs::remove_all(again.out_dir);
  again.phantoms = {plan.phantoms[1]};
  again.snr_list_db = {20.0};
  again.jobs = 1;
  const GridReport report = run_grid(again);
  const std::string cell = phantom_label(again.phantoms[0]) + "_20dB";
  const fs::path a = plan.out_dir / "cells" / cell, b = again.out_dir / "cells" / cell;
  std::vector<std::string> differing;
  if (!report.failures.empty()) differing.push_back("rerun failed");
  for (const char* f : {"probes.csv", "oracle_ar.csv", "oracle_tv2.csv", "scanline.csv"})
    if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) differing.push_back(f);
  if (row_without_wall(a / "row.csv") != row_without_wall(b / "row.csv")) differing.push_back("row.csv");

  // The 25 dB smoothness series against the rows written by criterion 5.
  const SmoothnessRun run = smoothness_series(25.0);
  std::istringstream in(slurp(smoothness_csv));
  std::string line, previous;
  while (std::getline(in, line))
    if (line.rfind("25,", 0) == 0) previous += line + "\n";
  if (previous != run.csv) differing.push_back("smoothness.csv");

  std::string detail = "re-ran " + cell + " and the 25 dB smoothness series (wall_s excluded)";
  for (const auto& d : differing) detail += "; differs: " + d;
  return {differing.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path out = "acceptance";
  std::string only;
  bool resume = false;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--out", out, "output directory for CSVs and grid cells");
  app.add_option("--only", only, "comma-separated criteria to run, e.g. 1,2,3");
  app.add_flag("--resume", resume, "reuse finished grid cells from an earlier run");
  app.add_option("--jobs", jobs, "parallel grid cells")->check(CLI::PositiveNumber);
  int grid_size = 64, grid_samples = 256;
  app.add_option("--grid-size", grid_size, "grid edge for criteria 6 to 8 (smoke runs only)");
  app.add_option("--grid-samples", grid_samples, "time samples for criteria 6 to 8 (smoke runs only)");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  {
    std::stringstream ss(only);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) selected.insert(std::stoi(item));
    if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};
  }
  fs::create_directories(out);

  std::map<int, Verdict> verdicts;
  auto run = [&](int id, const std::function<Verdict()>& f) {
    if (!selected.contains(id)) return;
    const auto t0 = Clock::now();
    try {
      verdicts[id] = f();
    } catch (const std::exception& e) {
      verdicts[id] = {false, std::string("error: ") + e.what()};
    }
    fmt::print(stderr, "[criterion {} done in {:.1f} s]\n", id, seconds_since(t0));
  };

  run(1, [&] { return operator_correctness(out); });
  run(2, [&] { return prox_clip_oracles(); });
  run(3, [&] { return admm_optimality(out); });
  run(4, [&] { return tikhonov_baseline(); });
  run(5, [&] { return smoothness_trend(out); });

  const ExperimentPlan plan = desk_plan(out / "grid", jobs, grid_size, grid_samples);
  GridRun grid;
  if (selected.contains(6) || selected.contains(7) || selected.contains(8)) {
    if (!resume) fs::remove_all(plan.out_dir / "cells");
    const auto t0 = Clock::now();
    try {
      grid.report = run_grid(plan);
    } catch (const std::exception& e) {
      grid.report.failures.push_back(e.what());
    }
    grid.seconds = seconds_since(t0);
    fmt::print(stderr, "[grid done in {:.1f} s]\n", grid.seconds);
  }
  run(7, [&] { return comparison_trend(grid); });
  run(6, [&] { return tracking_fidelity(plan, grid, out); });
  run(8, [&] { return determinism(plan, out, out / "smoothness.csv"); });

  static const std::map<int, const char*> names{{1, "operator correctness"}, {2, "prox and clip oracles"},
                                                {3, "ADMM optimality"},      {4, "Tikhonov baseline"},
                                                {5, "smoothness trend"},     {6, "tracking fidelity"},
                                                {7, "comparison trend"},     {8, "determinism"}};
  bool all = true;
  std::ostringstream summary;
  for (const auto& [id, v] : verdicts) {
    all = all && v.pass;
    summary << fmt::format("{} criterion {}: {} ({})\n", v.pass ? "PASS" : "FAIL", id, names.at(id), v.detail);
  }
  fmt::print("{}", summary.str());
  write_text(out / "summary.txt", summary.str());
  return all ? 0 : 1;
}
