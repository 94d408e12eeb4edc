#include "pat/experiment.hpp"

#include "pat/error.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace pat {

TimeSampling ScannerSetup::sampling() const {
  return TimeSampling::covering(grid(), geometry.radius_mm, samples, c0_mm_per_us);
}

ExperimentPlan ExperimentPlan::defaults() {
  ExperimentPlan plan;
  for (auto kind : {PhantomKind::BloodVessel, PhantomKind::Derenzo, PhantomKind::PatText}) {
    PhantomSpec spec;
    spec.kind = kind;
    spec.size = plan.scanner.size;
    spec.fov_mm = plan.scanner.fov_mm;
    plan.phantoms.push_back(spec);
  }
  // Penalty and tolerances tuned for the unit-scaled operator.
  for (AdmmConfig* a : {&plan.tracking.admm, &plan.comparison.oracle_admm}) {
    a->beta = 0.05;
    a->primal_tol = a->dual_tol = 1e-4;
  }
  return plan;
}

void ExperimentPlan::validate() const {
  require(!phantoms.empty(), ErrorKind::Config, "the plan has no phantoms");
  require(!snr_list_db.empty(), ErrorKind::Config, "the plan has no SNR levels");
  require(jobs >= 1, ErrorKind::Config, "jobs must be at least 1");
  require(scanner.size >= 8 && scanner.samples >= 2 && scanner.geometry.count >= 1, ErrorKind::Config,
          "invalid scanner setup");
  for (const auto& p : phantoms)
    require(p.size == scanner.size, ErrorKind::Config, "phantom size differs from the scanner grid");
  tracking.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorKind::Config, "'" + key + "' expects a number, got '" + v + "'");
}

int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw Error(ErrorKind::Config, "'" + key + "' expects an integer");
  return static_cast<int>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error(ErrorKind::Config, "'" + key + "' expects a boolean, got '" + v + "'");
}

SplitScheme to_scheme(const std::string& v) {
  try {
    return parse_split_scheme(v);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::map<std::string, std::string> read_key_values(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::Io, "cannot read config file " + file.string());
  std::map<std::string, std::string> out;
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, fmt::format("{}:{}: expected key = value", file.string(), number));
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::Config, fmt::format("{}:{}: empty key", file.string(), number));
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

void apply_settings(ExperimentPlan& plan, const std::map<std::string, std::string>& settings) {
  // Scanner keys first so phantoms pick up the final size.
  std::vector<std::string> phantom_names;
  std::optional<std::filesystem::path> phantom_file;
  std::optional<std::uint64_t> phantom_seed;
  bool phantoms_given = false;
  auto& t = plan.tracking;
  auto& c = plan.comparison;
  for (const auto& [key, v] : settings) {
    if (key == "phantoms") {
      phantom_names = split_list(v);
      phantoms_given = true;
    } else if (key == "phantom_file") {
      phantom_file = v;
    } else if (key == "phantom_seed") {
      phantom_seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "size") {
      plan.scanner.size = to_int(key, v);
    } else if (key == "fov_mm") {
      plan.scanner.fov_mm = to_double(key, v);
    } else if (key == "transducers") {
      plan.scanner.geometry.count = to_int(key, v);
    } else if (key == "radius_mm") {
      plan.scanner.geometry.radius_mm = to_double(key, v);
    } else if (key == "samples") {
      plan.scanner.samples = to_int(key, v);
    } else if (key == "c0") {
      plan.scanner.c0_mm_per_us = to_double(key, v);
    } else if (key == "normalize") {
      plan.scanner.normalize = to_bool(key, v);
    } else if (key == "threads") {
      plan.scanner.threads = to_int(key, v);
    } else if (key == "snr_db") {
      plan.snr_list_db.clear();
      for (const auto& s : split_list(v)) plan.snr_list_db.push_back(to_double(key, s));
    } else if (key == "methods") {
      c.ar_tr = c.ar_o = c.tv2_o = false;
      for (const auto& m : split_list(v)) {
        if (m == "AR-TR") c.ar_tr = true;
        else if (m == "AR-O") c.ar_o = true;
        else if (m == "TV2-O") c.tv2_o = true;
        else throw Error(ErrorKind::Config, "unknown method '" + m + "'");
      }
    } else if (key == "epsilon") {
      t.epsilon = to_double(key, v);
    } else if (key == "delta") {
      t.delta = to_double(key, v);
    } else if (key == "k") {
      t.k = to_double(key, v);
    } else if (key == "M") {
      t.M = to_int(key, v);
    } else if (key == "epsilon_t") {
      t.epsilon_t = to_double(key, v);
    } else if (key == "lambda0") {
      t.lambda0 = to_double(key, v);
    } else if (key == "lambda_cap_factor") {
      t.lambda_cap_factor = to_double(key, v);
    } else if (key == "max_rounds") {
      t.max_rounds = to_int(key, v);
    } else if (key == "restart") {
      t.restart = parse_restart_policy(v);
    } else if (key == "split") {
      t.scheme = to_scheme(v);
    } else if (key == "split_seed") {
      t.split_seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "alpha") {
      t.alpha = to_double(key, v);
    } else if (key == "u") {
      t.u = to_double(key, v);
    } else if (key == "beta") {
      t.admm.beta = c.oracle_admm.beta = to_double(key, v);
    } else if (key == "primal_tol") {
      t.admm.primal_tol = to_double(key, v);
    } else if (key == "dual_tol") {
      t.admm.dual_tol = to_double(key, v);
    } else if (key == "max_outer_iter") {
      t.admm.max_outer_iter = to_int(key, v);
    } else if (key == "oracle_tol") {
      c.oracle_admm.primal_tol = c.oracle_admm.dual_tol = to_double(key, v);
    } else if (key == "oracle_max_iter") {
      c.oracle_admm.max_outer_iter = to_int(key, v);
    } else if (key == "oracle_points") {
      c.oracle_points = to_int(key, v);
    } else if (key == "oracle_lo") {
      c.oracle_lo = to_double(key, v);
    } else if (key == "oracle_hi") {
      c.oracle_hi = to_double(key, v);
    } else if (key == "seed") {
      plan.seed = static_cast<std::uint64_t>(to_int(key, v));
    } else if (key == "jobs") {
      plan.jobs = to_int(key, v);
    } else if (key == "out") {
      plan.out_dir = v;
    } else {
      throw Error(ErrorKind::Config, "unknown setting '" + key + "'");
    }
  }
  if (phantoms_given) {
    plan.phantoms.clear();
    for (const auto& name : phantom_names) {
      PhantomSpec spec;
      try {
        spec.kind = parse_phantom_kind(name);
      } catch (const Error& e) {
        throw Error(ErrorKind::Config, e.what());
      }
      if (spec.kind == PhantomKind::FromFile) {
        if (!phantom_file) throw Error(ErrorKind::Config, "FromFile phantom needs phantom_file");
        spec.path = *phantom_file;
      }
      plan.phantoms.push_back(spec);
    }
  }
  for (auto& p : plan.phantoms) {
    p.size = plan.scanner.size;
    p.fov_mm = plan.scanner.fov_mm;
    if (phantom_seed) p.seed = *phantom_seed;
  }
}

std::string phantom_label(const PhantomSpec& spec) {
  std::string label = to_string(spec.kind);
  if (spec.kind == PhantomKind::FromFile && spec.path) label += "-" + spec.path->stem().string();
  if (spec.seed != 0) label += fmt::format("-s{}", spec.seed);
  return label;
}

std::uint64_t cell_seed(std::uint64_t plan_seed, const PhantomSpec& spec, double snr_db) {
  std::uint64_t h = splitmix(plan_seed);
  for (const char ch : phantom_label(spec)) h = splitmix(h ^ static_cast<unsigned char>(ch));
  return splitmix(h ^ std::bit_cast<std::uint64_t>(snr_db));
}

ForwardOperator load_or_build_operator(const ScannerSetup& setup, const std::filesystem::path& cache_dir,
                                       bool* hit) {
  const GridMeta grid = setup.grid();
  const TimeSampling sampling = setup.sampling();
  // gamma = 0 in the key marks the normalized variant.
  const std::uint64_t key = operator_key(grid, setup.geometry, sampling, setup.normalize ? 0.0 : 1.0);
  const auto file = cache_dir / fmt::format("operator-{:016x}.path", key);
  if (std::filesystem::exists(file)) {
    try {
      ForwardOperator op = read_operator(file);
      if (op.grid == grid && op.geometry == setup.geometry && op.sampling == sampling &&
          (setup.normalize || op.gamma == 1.0)) {
        if (hit) *hit = true;
        return op;
      }
    } catch (const Error&) {
      // Unreadable or stale cache entries are rebuilt below.
    }
  }
  if (hit) *hit = false;
  ForwardOperator op = setup.normalize ? build_normalized_operator(grid, setup.geometry, sampling, setup.threads)
                                       : build_operator(grid, setup.geometry, sampling, 1.0, setup.threads);
  const auto tmp = file.string() + fmt::format(".tmp{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
  write_operator(op, tmp);
  std::filesystem::rename(tmp, file);
  return op;
}

namespace {

std::string cell_name(const PhantomSpec& spec, double snr_db) {
  return fmt::format("{}_{}dB", phantom_label(spec), snr_db);
}

void write_text_atomic(const std::filesystem::path& file, const std::string& text) {
  std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp);
  }
  std::filesystem::rename(tmp, file);
}

std::optional<ComparisonRow> read_finished_row(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::string header, line;
  if (!in || !std::getline(in, header) || !std::getline(in, line)) return std::nullopt;
  try {
    return parse_results_row(line);
  } catch (const Error&) {
    return std::nullopt;
  }
}

void save_image(const ImageGrid& img, const std::filesystem::path& stem) {
  if (img.size() == 0) return;
  write_pgm16(img, stem.string() + ".pgm");
  write_raw_grid(img, stem.string() + ".patg");
}

std::string oracle_csv(const OracleResult& r) {
  std::string s = "lambda,ssim\n";
  for (const auto& [lambda, score] : r.grid) s += fmt::format("{:.17g},{:.17g}\n", lambda, score);
  return s;
}

std::string scanline_csv(const ImageGrid& truth, const Comparison& c) {
  const int row = truth.ny / 2;
  const auto t = scanline(truth, row);
  auto values = [&](const ImageGrid& img) {
    std::vector<double> v(t.size(), std::numeric_limits<double>::quiet_NaN());
    if (img.same_shape(truth)) {
      const auto s = scanline(img, row);
      for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i].second;
    }
    return v;
  };
  const auto tr = values(c.tracking.image);
  const auto ar = values(c.ar_o.best_image);
  const auto tv = values(c.tv2_o.best_image);
  std::string s = "x_mm,truth,ar_tr,ar_o,tv2_o\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    s += fmt::format("{:.6f},{:.17g},{:.17g},{:.17g},{:.17g}\n", t[i].first, t[i].second, tr[i], ar[i], tv[i]);
  return s;
}

}  // namespace

CellOutcome run_cell(const ExperimentPlan& plan, const OperatorSplit& split, std::size_t phantom_index,
                     double snr_db) {
  const PhantomSpec& spec = plan.phantoms.at(phantom_index);
  const auto dir = plan.out_dir / "cells" / cell_name(spec, snr_db);
  const auto row_file = dir / "row.csv";
  if (auto row = read_finished_row(row_file)) return {*row, true};

  std::filesystem::create_directories(dir);
  const ImageGrid truth = generate_phantom(spec);
  const Measurement meas = simulate_measurement(split.full, truth, snr_db, cell_seed(plan.seed, spec, snr_db));
  write_measurement(meas, dir / "measurement.patm");

  std::ostringstream probes;
  write_probe_header(probes);
  Comparison c = compare_methods(truth, split, meas.values, plan.tracking, plan.comparison, &probes);
  c.row.phantom = phantom_label(spec);
  c.row.snr_db = snr_db;

  save_image(truth, dir / "truth");
  save_image(c.tracking.image, dir / "ar_tr");
  save_image(c.ar_o.best_image, dir / "ar_o");
  save_image(c.tv2_o.best_image, dir / "tv2_o");
  write_text_atomic(dir / "probes.csv", probes.str());
  if (plan.comparison.ar_o) write_text_atomic(dir / "oracle_ar.csv", oracle_csv(c.ar_o));
  if (plan.comparison.tv2_o) write_text_atomic(dir / "oracle_tv2.csv", oracle_csv(c.tv2_o));
  write_text_atomic(dir / "scanline.csv", scanline_csv(truth, c));

  std::ostringstream row;
  write_results_header(row);
  write_results_row(row, c.row);
  write_text_atomic(row_file, row.str());
  return {c.row, false};
}

GridReport run_grid(const ExperimentPlan& plan) {
  plan.validate();
  std::filesystem::create_directories(plan.out_dir);
  const ForwardOperator op = load_or_build_operator(plan.scanner, plan.out_dir / "cache");
  const OperatorSplit split = split_rows(op, plan.tracking.delta, plan.tracking.scheme, plan.tracking.split_seed);

  struct Cell {
    std::size_t phantom;
    double snr;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < plan.phantoms.size(); ++p)
    for (const double snr : plan.snr_list_db) cells.push_back({p, snr});

  std::vector<std::optional<ComparisonRow>> rows(cells.size());
  GridReport report;
  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      try {
        const CellOutcome out = run_cell(plan, split, cell.phantom, cell.snr);
        std::lock_guard lock(report_mutex);
        rows[i] = out.row;
        if (out.skipped) ++report.skipped;
        if (!out.row.tracking_converged && plan.comparison.ar_tr) report.non_convergence = true;
      } catch (const std::exception& e) {
        std::lock_guard lock(report_mutex);
        report.failures.push_back(cell_name(plan.phantoms[cell.phantom], cell.snr) + ": " + e.what());
        if (const auto* pe = dynamic_cast<const Error*>(&e); pe && pe->kind() == ErrorKind::NonConvergence)
          report.non_convergence = true;
      }
    }
  };
  const int width = std::min<int>(plan.jobs, static_cast<int>(cells.size()));
  if (width <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < width; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ostringstream merged;
  write_results_header(merged);
  for (const auto& r : rows) {
    if (!r) continue;
    write_results_row(merged, *r);
    report.rows.push_back(*r);
  }
  write_text_atomic(plan.out_dir / "results.csv", merged.str());
  return report;
}

}  // namespace pat
