#include "pat/error.hpp"
#include "pat/experiment.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace pat;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorKind error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::Io;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file);
  out << text;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PAT_RECON_EXE) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// A small plan that runs in seconds: 32 x 32 grid, 16 transducers x 64 samples.
ExperimentPlan tiny_plan(const fs::path& out) {
  ExperimentPlan plan = ExperimentPlan::defaults();
  apply_settings(plan, {{"size", "32"},
                        {"samples", "64"},
                        {"phantoms", "Derenzo"},
                        {"snr_db", "20"},
                        {"oracle_points", "5"},
                        {"out", out.string()}});
  return plan;
}

}  // namespace

TEST_CASE("key = value files") {
  const auto dir = test::temp_dir("config");
  write_file(dir / "ok.cfg", "# settings\nepsilon = 0.05\n\n  k=1.1  # inline comment\nphantoms = Derenzo, PatText\n");
  const auto kv = read_key_values(dir / "ok.cfg");
  CHECK(kv.size() == 3);
  CHECK(kv.at("epsilon") == "0.05");
  CHECK(kv.at("k") == "1.1");
  CHECK(kv.at("phantoms") == "Derenzo, PatText");

  write_file(dir / "bad.cfg", "epsilon 0.05\n");
  CHECK(error_of([&] { read_key_values(dir / "bad.cfg"); }) == ErrorKind::Config);
  write_file(dir / "nokey.cfg", "= 3\n");
  CHECK(error_of([&] { read_key_values(dir / "nokey.cfg"); }) == ErrorKind::Config);
  CHECK(error_of([&] { read_key_values(dir / "absent.cfg"); }) == ErrorKind::Io);
}

TEST_CASE("plan defaults follow the protocol and settings override them") {
  ExperimentPlan plan = ExperimentPlan::defaults();
  CHECK(plan.phantoms.size() == 3);
  CHECK(plan.snr_list_db == std::vector<double>{15, 20, 25, 30});
  CHECK(plan.scanner.size == 128);
  CHECK(plan.scanner.geometry.count == 16);
  CHECK(plan.tracking.epsilon == 0.06);
  CHECK(plan.tracking.delta == 0.1);
  CHECK(plan.tracking.k == 1.05);
  CHECK(plan.tracking.M == 50);
  CHECK(plan.tracking.alpha == 0.5);
  CHECK(plan.tracking.epsilon_t == 1e-4);
  CHECK_NOTHROW(plan.validate());

  apply_settings(plan, {{"size", "64"},
                        {"samples", "256"},
                        {"snr_db", "15, 30"},
                        {"methods", "AR-TR, TV2-O"},
                        {"epsilon", "0.05"},
                        {"restart", "full"},
                        {"beta", "0.2"},
                        {"oracle_tol", "1e-5"},
                        {"phantom_seed", "3"}});
  CHECK(plan.scanner.size == 64);
  for (const auto& p : plan.phantoms) {
    CHECK(p.size == 64);
    CHECK(p.seed == 3);
  }
  CHECK(plan.snr_list_db == std::vector<double>{15, 30});
  CHECK(plan.comparison.ar_tr);
  CHECK(!plan.comparison.ar_o);
  CHECK(plan.comparison.tv2_o);
  CHECK(plan.tracking.epsilon == 0.05);
  CHECK(plan.tracking.restart == RestartPolicy::FullSearch);
  CHECK(plan.tracking.admm.beta == 0.2);
  CHECK(plan.comparison.oracle_admm.beta == 0.2);
  CHECK(plan.comparison.oracle_admm.primal_tol == 1e-5);

  CHECK(error_of([&] { apply_settings(plan, {{"colour", "red"}}); }) == ErrorKind::Config);
  CHECK(error_of([&] { apply_settings(plan, {{"epsilon", "small"}}); }) == ErrorKind::Config);
  CHECK(error_of([&] { apply_settings(plan, {{"M", "2.5"}}); }) == ErrorKind::Config);
  CHECK(error_of([&] { apply_settings(plan, {{"methods", "AR-X"}}); }) == ErrorKind::Config);
  CHECK(error_of([&] { apply_settings(plan, {{"phantoms", "FromFile"}}); }) == ErrorKind::Config);
  CHECK(error_of([&] { apply_settings(plan, {{"phantoms", "Teapot"}}); }) == ErrorKind::Config);

  ExperimentPlan bad = ExperimentPlan::defaults();
  bad.snr_list_db.clear();
  CHECK(error_of([&] { bad.validate(); }) == ErrorKind::Config);
  bad = ExperimentPlan::defaults();
  bad.tracking.delta = 0.6;
  CHECK(error_of([&] { bad.validate(); }) == ErrorKind::DeltaOutOfRange);
}

TEST_CASE("cell seeds are deterministic and distinct") {
  const ExperimentPlan plan = ExperimentPlan::defaults();
  const auto& a = plan.phantoms[0];
  const auto& b = plan.phantoms[1];
  CHECK(cell_seed(1, a, 20) == cell_seed(1, a, 20));
  CHECK(cell_seed(1, a, 20) != cell_seed(2, a, 20));
  CHECK(cell_seed(1, a, 20) != cell_seed(1, b, 20));
  CHECK(cell_seed(1, a, 20) != cell_seed(1, a, 25));
  CHECK(phantom_label(a) == "BloodVessel");
  PhantomSpec seeded = a;
  seeded.seed = 4;
  CHECK(phantom_label(seeded) == "BloodVessel-s4");
}

TEST_CASE("operator cache") {
  const auto dir = test::temp_dir("cache");
  ScannerSetup setup;
  setup.size = 16;
  setup.samples = 32;
  bool hit = true;
  const ForwardOperator built = load_or_build_operator(setup, dir, &hit);
  CHECK(!hit);
  const ForwardOperator loaded = load_or_build_operator(setup, dir, &hit);
  CHECK(hit);
  CHECK(loaded.fingerprint == built.fingerprint);
  CHECK(loaded.gamma == built.gamma);
  setup.normalize = false;
  const ForwardOperator raw = load_or_build_operator(setup, dir, &hit);
  CHECK(!hit);
  CHECK(raw.gamma == 1.0);
}

TEST_CASE("one-cell grid writes one row and resumes without recomputing") {
  const auto dir = test::temp_dir("grid");
  const ExperimentPlan plan = tiny_plan(dir);
  const GridReport first = run_grid(plan);
  REQUIRE(first.failures.empty());
  REQUIRE(first.rows.size() == 1);
  CHECK(first.skipped == 0);
  const std::string results = slurp(dir / "results.csv");
  CHECK(std::count(results.begin(), results.end(), '\n') == 2);

  const fs::path cell = dir / "cells" / "Derenzo_20dB";
  for (const char* f : {"truth.pgm", "truth.patg", "ar_tr.pgm", "ar_o.pgm", "tv2_o.pgm", "measurement.patm",
                        "probes.csv", "oracle_ar.csv", "oracle_tv2.csv", "scanline.csv", "row.csv"})
    CHECK_MESSAGE(fs::exists(cell / f), f);

  const auto stamp = fs::last_write_time(cell / "measurement.patm");
  const GridReport second = run_grid(plan);
  CHECK(second.skipped == 1);
  CHECK(fs::last_write_time(cell / "measurement.patm") == stamp);
  CHECK(slurp(dir / "results.csv") == results);

  // A fresh run of the same plan reproduces every number except wall time.
  const auto dir2 = test::temp_dir("grid-again");
  const GridReport third = run_grid(tiny_plan(dir2));
  REQUIRE(third.rows.size() == 1);
  const ComparisonRow& a = first.rows[0];
  const ComparisonRow& b = third.rows[0];
  CHECK(a.ssim_ar_tr == b.ssim_ar_tr);
  CHECK(a.ssim_ar_o == b.ssim_ar_o);
  CHECK(a.ssim_tv2_o == b.ssim_tv2_o);
  CHECK(a.lambda_tr == b.lambda_tr);
  CHECK(a.rounds == b.rounds);
  CHECK(slurp(dir / "cells/Derenzo_20dB/probes.csv") == slurp(dir2 / "cells/Derenzo_20dB/probes.csv"));
}

TEST_CASE("command line front end") {
  const auto dir = test::temp_dir("cli");
  const std::string out = " --out " + (dir / "a").string();

  SUBCASE("phantom output is byte-identical across runs") {
    REQUIRE(run_cli("phantom --kind Derenzo --size 64" + out) == 0);
    const std::string first = slurp(dir / "a" / "Derenzo.pgm");
    REQUIRE(run_cli("phantom --kind Derenzo --size 64 --out " + (dir / "b").string()) == 0);
    CHECK(!first.empty());
    CHECK(slurp(dir / "b" / "Derenzo.pgm") == first);
    CHECK(slurp(dir / "a" / "Derenzo.patg") == slurp(dir / "b" / "Derenzo.patg"));
  }
  SUBCASE("simulate, reconstruct, evaluate") {
    const std::string geo = " --size 32 --samples 64";
    REQUIRE(run_cli("simulate --kind Derenzo --snr-db 25" + geo + out) == 0);
    const std::string meas = " --measurement " + (dir / "a" / "measurement.patm").string();
    CHECK(run_cli("reconstruct --method AR --lambda 1e-4" + meas + out + " --trace " +
                  (dir / "a" / "trace.csv").string()) == 0);
    CHECK(fs::exists(dir / "a" / "ar.pgm"));
    CHECK(slurp(dir / "a" / "trace.csv").rfind("iter,data_term,reg_term,primal_res,dual_res,wall_ms\n", 0) == 0);
    CHECK(run_cli("track" + meas + out) == 0);
    CHECK(fs::exists(dir / "a" / "probes.csv"));
    CHECK(run_cli("evaluate --recon " + (dir / "a" / "ar_tr.patg").string() + " --truth " +
                  (dir / "a" / "ar.patg").string() + " --scanline-row 16" + out) == 0);
    CHECK(fs::exists(dir / "a" / "scanline_truth.csv"));

    // Exit codes: 2 configuration, 3 non-convergence, 4 I/O.
    write_file(dir / "bad.cfg", "colour = red\n");
    CHECK(run_cli("grid --config " + (dir / "bad.cfg").string() + out) == 2);
    CHECK(run_cli("reconstruct --method AR" + meas + out) == 2);
    CHECK(run_cli("frobnicate") == 2);
    write_file(dir / "short.cfg", "max_outer_iter = 1\nprimal_tol = 1e-12\ndual_tol = 1e-12\n");
    CHECK(run_cli("reconstruct --method AR --lambda 1e-4 --config " + (dir / "short.cfg").string() + meas + out) ==
          3);
    CHECK(run_cli("track --measurement " + (dir / "missing.patm").string() + out) == 4);
    CHECK(run_cli("evaluate --recon " + (dir / "none.pgm").string() + " --truth " + (dir / "none.pgm").string() +
                  out) == 4);
  }
}
