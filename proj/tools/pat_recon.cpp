// pat-recon: phantoms, simulation, reconstruction, tracking, oracle baselines
// and the experiment grid from the command line.
//
// Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
// 4 I/O error.

#include "pat/admm.hpp"
#include "pat/error.hpp"
#include "pat/experiment.hpp"
#include "pat/metrics.hpp"
#include "pat/tracking.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace pat;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNonConvergence = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConvergence:
    case ErrorKind::DegenerateCost:
    case ErrorKind::Lambda0TooLarge:
    case ErrorKind::CapExceeded:
    case ErrorKind::RoundCapExceeded:
      return kExitNonConvergence;
    case ErrorKind::UnreadableFile:
    case ErrorKind::Io:
      return kExitIo;
    default:
      return kExitConfig;
  }
}

// Options shared by several subcommands. Values left unset do not override
// the config file.
struct Common {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<double> snr_db;
  std::optional<double> epsilon, delta, k, alpha, u;
  std::optional<int> M;
  std::string trace;
  std::optional<int> transducers, samples, size;
  std::optional<double> radius_mm;
};

ExperimentPlan make_plan(const Common& c) {
  ExperimentPlan plan = ExperimentPlan::defaults();
  std::map<std::string, std::string> settings;
  if (!c.config.empty()) settings = read_key_values(c.config);
  auto set = [&](const char* key, const auto& value) {
    if (value) settings[key] = fmt::format("{}", *value);
  };
  set("seed", c.seed);
  set("jobs", c.jobs);
  set("snr_db", c.snr_db);
  set("epsilon", c.epsilon);
  set("delta", c.delta);
  set("k", c.k);
  set("M", c.M);
  set("alpha", c.alpha);
  set("u", c.u);
  set("transducers", c.transducers);
  set("samples", c.samples);
  set("size", c.size);
  set("radius_mm", c.radius_mm);
  set("out", c.out);
  apply_settings(plan, settings);
  return plan;
}

ScannerSetup setup_for(const Measurement& m) {
  ScannerSetup s;
  s.size = m.grid.nx;
  s.fov_mm = m.grid.nx * m.grid.spacing_mm;
  s.geometry = m.geometry;
  s.samples = m.sampling.mt;
  s.c0_mm_per_us = m.sampling.c0_mm_per_us;
  s.normalize = m.gamma != 1.0;
  return s;
}

// The operator that generated a measurement, from the cache when possible.
ForwardOperator operator_for(const Measurement& m, const fs::path& cache) {
  const ScannerSetup setup = setup_for(m);
  if (m.grid.nx == m.grid.ny && setup.sampling() == m.sampling) {
    ForwardOperator op = load_or_build_operator(setup, cache);
    if (op.gamma == m.gamma) return op;
  }
  ForwardOperator op = m.gamma != 1.0 ? build_normalized_operator(m.grid, m.geometry, m.sampling)
                                      : build_operator(m.grid, m.geometry, m.sampling, 1.0);
  require(op.gamma == m.gamma, ErrorKind::Config, "cannot reproduce the operator scale of the measurement");
  return op;
}

void save_image(const ImageGrid& img, const fs::path& stem) {
  fs::create_directories(stem.parent_path());
  write_pgm16(img, stem.string() + ".pgm");
  write_raw_grid(img, stem.string() + ".patg");
}

std::ofstream open_text(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  return out;
}

void write_scanline(const ImageGrid& img, int row, const fs::path& file) {
  auto out = open_text(file);
  out << "x_mm,value\n";
  for (const auto& [x, v] : scanline(img, row)) out << fmt::format("{:.6f},{:.17g}\n", x, v);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Photoacoustic tomography reconstruction toolkit"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config, "key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--out", c.out, "output directory (default pat-out)");
  app.add_option("--seed", c.seed, "global seed");
  app.add_option("--jobs", c.jobs, "worker threads for the grid");
  app.add_option("--snr-db", c.snr_db, "measurement SNR in dB (inf for none)");
  app.add_option("--epsilon", c.epsilon, "relative smoothness bound");
  app.add_option("--delta", c.delta, "fraction of removed rows");
  app.add_option("--k", c.k, "geometric ratio of the lambda search");
  app.add_option("--M", c.M, "ADMM cycles per probe");
  app.add_option("--alpha", c.alpha, "intensity weight of the regularizer");
  app.add_option("--u", c.u, "upper bound of the box constraint");
  app.add_option("--trace", c.trace, "CSV file for the ADMM iteration log");
  app.add_option("--transducers", c.transducers, "transducer count");
  app.add_option("--radius-mm", c.radius_mm, "detection radius (mm)");
  app.add_option("--samples", c.samples, "time samples per transducer");
  app.add_option("--size", c.size, "image size in pixels");

  // phantom
  auto* phantom = app.add_subcommand("phantom", "write a phantom as PGM and raw grid")->fallthrough();
  std::string kind = "Derenzo", phantom_file;
  phantom->add_option("--kind", kind, "BloodVessel | Derenzo | PatText | FromFile");
  phantom->add_option("--file", phantom_file, "source image for FromFile");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "simulate a measurement from an image")->fallthrough();
  std::string image_file;
  bool no_normalize = false;
  simulate->add_option("--image", image_file, "input image (.patg or .pgm); default: a generated phantom");
  simulate->add_option("--kind", kind, "phantom kind when no image is given");
  simulate->add_flag("--no-normalize", no_normalize, "keep gamma = 1 instead of unit operator scale");

  // reconstruct / track / oracle
  std::string measurement_file, method = "AR-TR", truth_file, mode = "AR";
  std::optional<double> lambda;
  auto* reconstruct = app.add_subcommand("reconstruct", "reconstruct an image from a measurement")->fallthrough();
  reconstruct->add_option("--measurement", measurement_file, "PATM file")->required();
  reconstruct->add_option("--method", method, "AR-TR | AR | TV2");
  reconstruct->add_option("--lambda", lambda, "regularization weight for AR / TV2");
  auto* track = app.add_subcommand("track", "AR reconstruction with weight tracking")->fallthrough();
  track->add_option("--measurement", measurement_file, "PATM file")->required();
  auto* oracle = app.add_subcommand("oracle", "oracle-tuned AR or TV2 baseline")->fallthrough();
  oracle->add_option("--measurement", measurement_file, "PATM file")->required();
  oracle->add_option("--truth", truth_file, "ground-truth image")->required();
  oracle->add_option("--mode", mode, "AR | TV2");

  // grid
  auto* grid = app.add_subcommand("grid", "run the phantom x SNR experiment grid")->fallthrough();

  // evaluate
  std::string recon_file;
  std::optional<int> scan_row;
  auto* evaluate = app.add_subcommand("evaluate", "SSIM of a reconstruction against the truth")->fallthrough();
  evaluate->add_option("--recon", recon_file, "reconstructed image")->required();
  evaluate->add_option("--truth", truth_file, "ground-truth image")->required();
  evaluate->add_option("--scanline-row", scan_row, "also write both scan lines of this row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    ExperimentPlan plan = make_plan(c);
    const fs::path out = plan.out_dir;
    const fs::path cache = out / "cache";
    std::optional<std::ofstream> trace_file;
    AdmmConfig admm = plan.tracking.admm;
    if (!c.trace.empty()) {
      trace_file = open_text(c.trace);
      *trace_file << "iter,data_term,reg_term,primal_res,dual_res,wall_ms\n";
      admm.trace = &*trace_file;
    }
    // Grid workers would share one trace stream; trace only a single worker.
    if (!(*grid && plan.jobs > 1)) plan.tracking.admm = admm;

    auto phantom_spec = [&] {
      PhantomSpec spec;
      spec.kind = parse_phantom_kind(kind);
      spec.size = plan.scanner.size;
      spec.fov_mm = plan.scanner.fov_mm;
      spec.seed = c.seed.value_or(0);
      if (!phantom_file.empty()) spec.path = phantom_file;
      return spec;
    };

    if (*phantom) {
      const PhantomSpec spec = phantom_spec();
      const ImageGrid img = generate_phantom(spec);
      save_image(img, out / phantom_label(spec));
      fmt::print("wrote {}.pgm and .patg ({}x{})\n", (out / phantom_label(spec)).string(), img.nx, img.ny);
      return 0;
    }

    if (*simulate) {
      ImageGrid img = image_file.empty() ? generate_phantom(phantom_spec())
                                         : read_image(image_file, plan.scanner.fov_mm / plan.scanner.size);
      plan.scanner.size = img.nx;
      plan.scanner.fov_mm = img.nx * img.spacing_mm;
      require(img.nx == img.ny, ErrorKind::UnsupportedSize, "simulation needs a square image");
      plan.scanner.normalize = !no_normalize;
      bool hit = false;
      const ForwardOperator op = load_or_build_operator(plan.scanner, cache, &hit);
      fmt::print("operator {} ({} rows, {} nonzeros)\n", hit ? "loaded from cache" : "assembled", op.rows(),
                 op.matrix.nonZeros());
      const double snr = c.snr_db.value_or(plan.snr_list_db.front());
      const Measurement m = simulate_measurement(op, img, snr, c.seed.value_or(plan.seed));
      fs::create_directories(out);
      write_measurement(m, out / "measurement.patm");
      fmt::print("wrote {}\n", (out / "measurement.patm").string());
      return 0;
    }

    if (*reconstruct || *track) {
      const Measurement meas = read_measurement(measurement_file);
      const ForwardOperator op = operator_for(meas, cache);
      fs::create_directories(out);
      if (*track || method == "AR-TR") {
        const OperatorSplit split = split_rows(op, plan.tracking.delta, plan.tracking.scheme, plan.tracking.split_seed);
        auto log = open_text(out / "probes.csv");
        write_probe_header(log);
        const TrackingResult r = track_and_reconstruct(split, meas.values, plan.tracking, &log);
        save_image(r.image, out / "ar_tr");
        fmt::print("lambda {:.6g}  S~ {:.4g}  rounds {}  ADMM iterations {}  converged {}\n", r.lambda, r.s_tilde,
                   r.rounds, r.admm_iterations, r.converged);
        return r.converged ? 0 : kExitNonConvergence;
      }
      require(method == "AR" || method == "TV2", ErrorKind::Config, "unknown method '" + method + "'");
      require(lambda.has_value(), ErrorKind::Config, "--lambda is required for fixed-weight reconstruction");
      const double alpha = method == "TV2" ? 0.0 : plan.tracking.alpha;
      const AdmmResult r =
          admm_solve(op, meas.values, *lambda, alpha, plan.tracking.u, admm, Eigen::VectorXd::Zero(op.cols()));
      save_image(r.image, out / (method == "TV2" ? "tv2" : "ar"));
      fmt::print("iterations {}  data {:.6g}  reg {:.6g}  converged {}\n", r.state.iterations, r.cost.data_term,
                 r.cost.reg_term, r.converged);
      return r.converged ? 0 : kExitNonConvergence;
    }

    if (*oracle) {
      const Measurement meas = read_measurement(measurement_file);
      const ForwardOperator op = operator_for(meas, cache);
      const ImageGrid truth = read_image(truth_file, op.grid.spacing_mm);
      require(mode == "AR" || mode == "TV2", ErrorKind::Config, "unknown oracle mode '" + mode + "'");
      const Regularizer reg = mode == "TV2" ? Regularizer::TV2 : Regularizer::AR;
      const double alpha = regularizer_alpha(reg);
      double scale = lambda_scale(op, meas.values, alpha);
      if (!(scale > 0.0)) scale = 1.0;
      const auto& opt = plan.comparison;
      AdmmConfig oracle_cfg = opt.oracle_admm;
      oracle_cfg.trace = admm.trace;
      const OracleResult r = oracle_tune(op, meas.values, truth, alpha,
                                         log_grid(scale, opt.oracle_points, opt.oracle_lo, opt.oracle_hi),
                                         plan.tracking.u, oracle_cfg, opt.ssim);
      const std::string name = mode == "TV2" ? "tv2_o" : "ar_o";
      save_image(r.best_image, out / name);
      auto csv = open_text(out / (name + ".csv"));
      csv << "lambda,ssim\n";
      for (const auto& [l, s] : r.grid) csv << fmt::format("{:.17g},{:.17g}\n", l, s);
      fmt::print("best lambda {:.6g}  SSIM {:.4f}\n", r.best_lambda, r.best_ssim);
      return 0;
    }

    if (*grid) {
      const GridReport report = run_grid(plan);
      for (const auto& r : report.rows)
        fmt::print("{:<20} {:>5} dB  AR-TR {:.4f}  TV2-O {:.4f}  AR-O {:.4f}\n", r.phantom, r.snr_db, r.ssim_ar_tr,
                   r.ssim_tv2_o, r.ssim_ar_o);
      fmt::print("{} cells, {} reused, {} failed; results in {}\n", report.rows.size() + report.failures.size(),
                 report.skipped, report.failures.size(), (out / "results.csv").string());
      for (const auto& f : report.failures) fmt::print(std::cerr, "failed: {}\n", f);
      if (!report.failures.empty()) return report.non_convergence ? kExitNonConvergence : kExitIo;
      return report.non_convergence ? kExitNonConvergence : 0;
    }

    if (*evaluate) {
      const ImageGrid truth = read_image(truth_file);
      const ImageGrid recon = read_image(recon_file);
      fmt::print("ssim {:.6f}\n", ssim(recon, truth));
      if (scan_row) {
        require(*scan_row >= 0 && *scan_row < truth.ny, ErrorKind::RowOutOfRange, "scan-line row out of range");
        write_scanline(truth, *scan_row, out / "scanline_truth.csv");
        write_scanline(recon, *scan_row, out / "scanline_recon.csv");
      }
      return 0;
    }
  } catch (const Error& e) {
    fmt::print(std::cerr, "error ({}): {}\n", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kExitConfig;
  }
  return 0;
}
