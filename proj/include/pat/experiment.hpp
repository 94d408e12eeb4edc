#pragma once

#include "pat/forward_model.hpp"
#include "pat/image_grid.hpp"
#include "pat/metrics.hpp"
#include "pat/tracking.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pat {

/// Everything needed to set up the forward problem for one phantom size.
struct ScannerSetup {
  int size = 128;
  double fov_mm = 12.8;
  TransducerGeometry geometry;
  int samples = 512;
  double c0_mm_per_us = 1.5;
  /// Scale H so that ||H_f||^2 / n_f = 1 (see build_normalized_operator).
  bool normalize = true;
  int threads = 1;

  GridMeta grid() const { return {size, size, fov_mm / size}; }
  TimeSampling sampling() const;
};

struct ExperimentPlan {
  std::vector<PhantomSpec> phantoms;
  std::vector<double> snr_list_db{15.0, 20.0, 25.0, 30.0};
  ScannerSetup scanner;
  TrackingConfig tracking;
  ComparisonOptions comparison;
  std::filesystem::path out_dir = "pat-out";
  std::uint64_t seed = 0;
  int jobs = 1;

  /// Blood vessel, Derenzo and "PAT" text at scanner.size.
  static ExperimentPlan defaults();
  void validate() const;
};

/// key = value lines; '#' starts a comment. Throws Config on malformed lines
/// and Io when the file cannot be read.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& file);

/// Applies recognised keys to the plan; unknown keys raise Config.
void apply_settings(ExperimentPlan& plan, const std::map<std::string, std::string>& settings);

std::string phantom_label(const PhantomSpec& spec);

/// Deterministic per-cell noise seed derived from the plan seed.
std::uint64_t cell_seed(std::uint64_t plan_seed, const PhantomSpec& spec, double snr_db);

/// Loads the operator for `setup` from `cache_dir` when a matching file is
/// present, otherwise builds it and writes the cache. `hit` reports which.
ForwardOperator load_or_build_operator(const ScannerSetup& setup, const std::filesystem::path& cache_dir,
                                       bool* hit = nullptr);

struct CellOutcome {
  ComparisonRow row;
  bool skipped = false;  ///< finished in an earlier run
};

/// Runs one (phantom, SNR) cell into out_dir/cells/<label>_<snr>dB and returns
/// its row; a cell with a finished row file is read back instead.
CellOutcome run_cell(const ExperimentPlan& plan, const OperatorSplit& split, std::size_t phantom_index,
                     double snr_db);

struct GridReport {
  std::vector<ComparisonRow> rows;  ///< plan order, successful cells only
  std::vector<std::string> failures;
  int skipped = 0;
  bool non_convergence = false;
};

/// All cells of the plan on a pool of plan.jobs workers, then a merged
/// out_dir/results.csv in plan order.
GridReport run_grid(const ExperimentPlan& plan);

}  // namespace pat
