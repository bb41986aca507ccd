#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "odedyn/experiments.hpp"

using namespace odedyn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("odedyn_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) { return read_file(p); }

Json small_sweep(const fs::path& out) {
  return {{"kind", "ode"},
          {"base", {{"p0", 4}, {"k", 2}, {"noise", 1e-3}, {"d", 100}}},
          {"grid", {{"delta", {0.0, 0.5}}, {"noise", {1e-3, 2e-3}}, {"seeds", {1, 2}}}},
          {"t_end", 2.0},
          {"dt", 0.05},
          {"record_points", 10},
          {"output_dir", out.string()}};
}

struct EnvGuard {
  explicit EnvGuard(const char* value) { ::setenv("ODEDYN_THREADS", value, 1); }
  ~EnvGuard() { ::unsetenv("ODEDYN_THREADS"); }
};

}  // namespace

TEST_CASE("power-law fit recovers an exact exponent") {
  std::vector<std::pair<double, double>> pts;
  for (double d : {1e2, 1e3, 1e4}) pts.emplace_back(d, 3.0 * std::pow(d, -0.5));
  const PowerLawFit f = finite_size_slope(pts);
  CHECK(std::abs(f.slope + 0.5) < 1e-12);
  CHECK(std::abs(f.r_squared - 1.0) < 1e-12);
  CHECK(std::abs(std::exp(f.intercept) - 3.0) < 1e-10);
  CHECK(f.points.size() == 3);
}

TEST_CASE("power-law fit tolerates one percent noise") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, double>> pts;
    for (double d : {200.0, 400.0, 800.0, 1600.0})
      pts.emplace_back(d, 0.7 * std::pow(d, -0.25) * (1.0 + 0.01 * rng.normal()));
    CHECK(std::abs(finite_size_slope(pts).slope + 0.25) <= 0.02);
  }
}

TEST_CASE("power-law fit rejects bad input") {
  CHECK_THROWS(fit_power_law({{1.0, 1.0}, {2.0, 0.5}}));
  CHECK_THROWS(fit_power_law({{1.0, 1.0}, {2.0, 0.0}, {3.0, 0.3}}));
  CHECK_THROWS(fit_power_law({{1.0, 1.0}, {-2.0, 0.5}, {3.0, 0.3}}));
}

TEST_CASE("thread cap honours the environment") {
  {
    EnvGuard env("3");
    CHECK(thread_cap() == 3);
    CHECK(effective_jobs(0) == 3);
    CHECK(effective_jobs(8) == 3);
    CHECK(effective_jobs(2) == 2);
  }
  {
    EnvGuard env("zero");
    CHECK_THROWS(thread_cap());
  }
  CHECK(thread_cap() >= 1);
}

TEST_CASE("parallel_for visits every index and reports failures") {
  EnvGuard env("4");
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_WITH(parallel_for(10, 4,
                                 [](std::size_t i) {
                                   if (i == 3 || i == 7) throw std::runtime_error("task " + std::to_string(i));
                                 }),
                    "task 3");
}

TEST_CASE("empty or unknown grids fail before any output") {
  const fs::path out = scratch("empty");
  Json spec = small_sweep(out);
  spec["grid"]["d"] = Json::array();
  CHECK_THROWS_AS(experiment_spec_from_json(spec), std::invalid_argument);
  Json unknown = small_sweep(out);
  unknown["grid"]["width"] = {1, 2};
  CHECK_THROWS_AS(experiment_spec_from_json(unknown), std::invalid_argument);
  ExperimentSpec manual = experiment_spec_from_json(small_sweep(out));
  manual.seeds.clear();
  CHECK_THROWS_AS(sweep(manual, 1), std::invalid_argument);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("grid expansion picks the leading mode") {
  const ExperimentSpec spec = experiment_spec_from_json(small_sweep(scratch("grid")));
  const auto runs = expand_grid(spec);
  CHECK(runs.size() == 8);
  CHECK(runs.front().mode == OdeMode::PlateauFull);
  CHECK(runs.back().mode == OdeMode::GreenLeading);
  CHECK(runs.back().scaling.noise == 2e-3);
}

TEST_CASE("phase-diagram sweep writes one trajectory per regime") {
  const fs::path out = scratch("phase");
  const Json spec = {{"kind", "ode"},
                     {"base", {{"p0", 8}, {"k", 4}, {"noise", 1e-3}, {"kappa", 0.301}, {"d", 10}}},
                     {"grid", {{"delta", {-0.301, 0.0, -0.551}}}},
                     {"t_end", 1.0},
                     {"dt", 0.05},
                     {"record_points", 5},
                     {"output_dir", out.string()}};
  const SweepResult r = sweep(experiment_spec_from_json(spec), 1);
  REQUIRE(r.run_dirs.size() == 3);
  std::vector<std::string> modes;
  for (const auto& dir : r.run_dirs) {
    CHECK(fs::exists(dir / "trajectory.csv"));
    const Json m = Json::parse(slurp(dir / "manifest.json"));
    modes.push_back(m.at("config").at("mode").get<std::string>());
    CHECK(m.contains("version"));
    CHECK(m.contains("wall_time_seconds"));
    CHECK(m.at("seed") == 1);
  }
  CHECK(modes == std::vector<std::string>{"plateau", "green", "orange"});
  CHECK(fs::exists(r.manifest));
  CHECK(fs::exists(r.manifest.parent_path() / "progress.log"));
}

TEST_CASE("sweeps are byte-identical across reruns and worker counts") {
  EnvGuard env("4");
  const fs::path serial = scratch("serial");
  const fs::path parallel = scratch("parallel");
  Json spec = small_sweep(serial);
  spec["kind"] = "sgd";
  spec["grid"]["d"] = {60, 90};
  spec["t_end"] = 0.5;
  const SweepResult a = sweep(experiment_spec_from_json(spec), 1);
  spec["output_dir"] = parallel.string();
  const SweepResult b = sweep(experiment_spec_from_json(spec), 4);
  const SweepResult c = sweep(experiment_spec_from_json(spec), 3);
  REQUIRE(a.run_dirs.size() == 16);
  for (std::size_t i = 0; i < a.run_dirs.size(); ++i) {
    CHECK(a.run_dirs[i].lexically_relative(serial) == b.run_dirs[i].lexically_relative(parallel));
    const std::string csv = slurp(a.run_dirs[i] / "trajectory.csv");
    CHECK(csv == slurp(b.run_dirs[i] / "trajectory.csv"));
    CHECK(csv == slurp(c.run_dirs[i] / "trajectory.csv"));
  }
}

TEST_CASE("a manifest alone reproduces its files") {
  const fs::path out = scratch("manifest");
  RunSpec spec;
  spec.kind = RunSpec::Kind::Sgd;
  spec.scaling.d = 80;
  spec.scaling.p0 = 4;
  spec.scaling.k = 2;
  spec.scaling.noise = 1e-2;
  spec.t_end = 1.0;
  spec.record = 30;
  spec.snapshots = true;
  spec.label_noise = LabelNoise::Rademacher;
  spec.convention = RiskConvention::Plain;
  const fs::path dir = run_phase_point(spec, out);
  const Json manifest = Json::parse(slurp(dir / "manifest.json"));
  const CommandOutput again = reproduce(manifest);
  REQUIRE(again.files.size() == manifest.at("files").size());
  for (const Artifact& f : again.files) CHECK(f.content == slurp(dir / f.name));
  CHECK(run_spec_from_json(manifest.at("config")).label_noise == LabelNoise::Rademacher);
}

TEST_CASE("trajectory files follow the CSV conventions") {
  RunSpec spec;
  spec.scaling.p0 = 2;
  spec.scaling.k = 1;
  spec.t_end = 0.5;
  spec.dt = 0.1;
  spec.record = 5;
  spec.snapshots = true;
  const CommandOutput out = execute_run(spec);
  const std::string& csv = out.files.at(0).content;
  CHECK(csv.rfind("t,risk,q_0_0,q_0_1,q_1_1,m_0_0,m_1_0\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(csv.find(';') == std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  const Json snaps = Json::parse(out.files.at(1).content);
  CHECK(snaps.size() == 6);
  CHECK(snaps[0].contains("t"));
  CHECK(snaps[0].at("Q").size() == 2);
  CHECK(snaps[0].at("M")[0].size() == 1);

  spec.format = OutputFormat::Json;
  spec.snapshots = false;
  const CommandOutput js = execute_run(spec);
  CHECK(js.files.at(0).name == "trajectory.json");
  CHECK(Json::parse(js.files.at(0).content).at("risk").size() == 6);
}

TEST_CASE("numbers round-trip through their decimal form") {
  for (double v : {0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0}) CHECK(std::stod(format_number(v)) == v);
  CHECK(format_number(std::int64_t{42}) == "42");
  CHECK(fnv1a_hex("").size() == 16);
  CHECK(fnv1a_hex("a") != fnv1a_hex("b"));
}

TEST_CASE("convergence study refuses regimes without a plateau-line ODE") {
  ConvergenceSpec spec;
  spec.d_list = {100, 200, 400};
  spec.base.delta = -0.6;
  CHECK_THROWS_AS(convergence_rate_study(spec), std::invalid_argument);
  spec.base.delta = -0.25;
  CHECK_THROWS_AS(convergence_rate_study(spec), std::invalid_argument);
}

TEST_CASE("convergence deviation vanishes at short horizons and is deterministic") {
  ConvergenceSpec spec;
  spec.base.p0 = 4;
  spec.base.k = 2;
  spec.base.noise = 1e-3;
  spec.d_list = {100, 200, 400};
  spec.seeds = 2;
  spec.t_end = 1e-2;
  spec.record = 1;
  const ConvergenceResult tiny = convergence_rate_study(spec);
  for (const auto& row : tiny.rows) CHECK(row.deviation < 1e-3);

  spec.t_end = 2.0;
  spec.record = 10;
  const ConvergenceResult a = convergence_rate_study(spec);
  spec.jobs = 1;
  const ConvergenceResult b = convergence_rate_study(spec);
  REQUIRE(a.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a.rows[i].per_seed == b.rows[i].per_seed);
  CHECK(convergence_csv(a) == convergence_csv(b));
}

TEST_CASE("analytic perturbation gap is exact and linear") {
  CHECK(std::abs(analytic_perturbation_gap(1e-2, 1.0, 1e-3) - 1e-2 * (1.0 - std::exp(-1.0))) < 1e-6);
  const double g1 = analytic_perturbation_gap(1e-2, 1.0, 1e-3);
  const double g2 = analytic_perturbation_gap(5e-3, 1.0, 1e-3);
  CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.1));

  PerturbationSpec spec;
  spec.eps_list = {1e-1, 1e-2, 1e-3};
  spec.overlap = false;
  const PerturbationResult r = perturbation_testbed(spec);
  REQUIRE(r.analytic_fit.has_value());
  CHECK(r.analytic_fit->slope == doctest::Approx(1.0).epsilon(1e-3));
  CHECK_FALSE(r.overlap_fit.has_value());
  const std::string csv = perturbation_csv(r);
  CHECK(csv.rfind("instance,eps,d,sup_gap,exact_gap\n", 0) == 0);
}

TEST_CASE("overlap perturbation gap shrinks with the dimension") {
  PerturbationSpec spec;
  spec.p0 = 4;
  spec.k = 2;
  spec.overlap_tau = 2.0;
  const double near = overlap_perturbation_gap(spec, 100);
  const double far = overlap_perturbation_gap(spec, 10000);
  // eps = d^-1/2 shrinks tenfold.
  CHECK(near / far > 10.0 / 3.0);
  CHECK(near / far < 30.0);
}

TEST_CASE("finite-size study writes per-run and mean tables") {
  FiniteSizeSpec spec;
  spec.base.p0 = 4;
  spec.base.k = 2;
  spec.base.delta = 0.5;
  spec.base.noise = 1e-2;
  spec.d_list = {50, 100, 200};
  spec.seeds = 2;
  spec.t_end = 3.0;
  spec.record = 40;
  const FiniteSizeResult r = finite_size_study(spec);
  CHECK(r.runs.size() == 6);
  CHECK(r.means.size() == 3);
  CHECK(r.fit.slope < 0.0);
  const std::string csv = finite_size_csv(r);
  CHECK(csv.rfind("d,seed,r_inf,window_std\n", 0) == 0);
  CHECK(finite_size_csv(finite_size_study(spec)) == csv);
  spec.d_list.clear();
  CHECK_THROWS(finite_size_study(spec));
}

TEST_CASE("kernel check is reproducible and well formed") {
  KernelCheckSpec spec;
  spec.samples = 5000;
  spec.trials = 3;
  const KernelCheckResult a = kernel_check(spec);
  spec.jobs = 1;
  const KernelCheckResult b = kernel_check(spec);
  CHECK(a.rows.size() == 12);
  CHECK(a.failures.size() == 4);
  const std::string csv = kernel_check_csv(a);
  CHECK(csv == kernel_check_csv(b));
  CHECK(csv.rfind("kind,cov_0,cov_1,cov_2,cov_3,cov_4,cov_5,cov_6,cov_7,cov_8,cov_9,closed,mc_mean,mc_stderr,z_score\n", 0) == 0);
}

TEST_CASE("command dispatch rejects unknown kinds") {
  CHECK_THROWS(execute_command("plot", Json::object()));
}
