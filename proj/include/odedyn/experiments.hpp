#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "odedyn/io.hpp"
#include "odedyn/kernels.hpp"
#include "odedyn/ode.hpp"
#include "odedyn/sgd.hpp"

namespace odedyn {

// ---------------------------------------------------------------------------
// Parallel execution

/// Worker count: ODEDYN_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int thread_cap();

/// min(requested, thread_cap()); requested <= 0 means the cap.
int effective_jobs(int requested);

/// Calls task(i) for i in [0, count) on up to `jobs` threads, handing out
/// indices dynamically. Rethrows the first failure (lowest index) after all
/// workers finish.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

// ---------------------------------------------------------------------------
// Fits

struct PowerLawFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;
};

/// Ordinary least squares of log y on log x. Needs >= 3 points with x, y > 0.
PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& points);

/// fit_power_law over (d, asymptotic risk) pairs.
PowerLawFit finite_size_slope(const std::vector<std::pair<double, double>>& points);

Json to_json(const PowerLawFit& fit);

// ---------------------------------------------------------------------------
// Single trajectories

enum class OutputFormat { Csv, Json };

/// One ODE or SGD trajectory; fully determines its output files.
struct RunSpec {
  enum class Kind { Ode, Sgd };
  Kind kind = Kind::Ode;
  ScalingConfig scaling;
  OdeMode mode = OdeMode::PlateauFull;  ///< ODE only
  double t_end = 100.0;
  double dt = 0.01;                     ///< ODE only; SGD uses time_step()
  int record = 200;                     ///< number of record intervals / points
  StudentInit::Kind init = StudentInit::Kind::Combination;
  std::uint64_t seed = 1;
  RiskConvention convention = RiskConvention::Half;
  LabelNoise label_noise = LabelNoise::Gaussian;  ///< SGD only
  bool snapshots = false;
  OutputFormat format = OutputFormat::Csv;
  /// Integrate a mode outside its regime.
  bool allow_mismatch = false;
};

Json to_json(const RunSpec& spec);
RunSpec run_spec_from_json(const Json& j);

/// Initial overlaps for an ODE run; matches the SGD run with the same spec.
OverlapState initial_overlaps(const RunSpec& spec);

OdeTrajectory run_ode(const RunSpec& spec);
SgdTrajectory run_sgd(const RunSpec& spec);

// ---------------------------------------------------------------------------
// Output files

struct Artifact {
  std::string name;
  std::string content;
};

struct CommandOutput {
  std::vector<Artifact> files;
  Json summary = Json::object();
};

/// Trajectory files of a run (trajectory.csv or .json, snapshots.json).
CommandOutput execute_run(const RunSpec& spec);

/// Directory name of a configuration: FNV-1a of its canonical JSON.
std::string param_hash(const std::string& kind, const Json& config);

/// Runs `kind` with `config` (the canonical JSON of its spec), writes
/// `<output_dir>/<kind>/<hash>/` with the artifacts and manifest.json, and
/// returns that directory.
std::filesystem::path run_and_write(const std::filesystem::path& output_dir,
                                    const std::string& kind, const Json& config, int jobs = 0);

/// Re-executes the command recorded in a manifest.
CommandOutput reproduce(const Json& manifest);

/// Dispatch by command name: ode, sgd, finite-size, convergence-rate,
/// kernel-check, perturbation. `jobs` bounds the workers of the studies and
/// never changes their output.
CommandOutput execute_command(const std::string& kind, const Json& config, int jobs = 0);

// ---------------------------------------------------------------------------
// Sweeps

/// Declarative grid of ODE or SGD runs.
struct ExperimentSpec {
  RunSpec::Kind kind = RunSpec::Kind::Ode;
  RunSpec base;
  std::vector<int> d;
  std::vector<double> noise;
  std::vector<double> kappa;
  std::vector<double> delta;
  std::vector<std::uint64_t> seeds;
  /// Mode names; "auto" picks the leading mode of each (kappa, delta).
  std::vector<std::string> modes;
  std::filesystem::path output_dir = "runs";
};

/// Parses a sweep description. Throws std::invalid_argument on an empty or
/// malformed grid.
ExperimentSpec experiment_spec_from_json(const Json& j);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);

/// Cartesian product of the grids, in a fixed order.
std::vector<RunSpec> expand_grid(const ExperimentSpec& spec);

struct SweepResult {
  std::vector<std::filesystem::path> run_dirs;
  std::filesystem::path manifest;
};

/// Runs every grid point on `jobs` workers. Writes one directory per point,
/// a sweep manifest and an append-only progress log.
SweepResult sweep(const ExperimentSpec& spec, int jobs);

/// Single grid point.
std::filesystem::path run_phase_point(const RunSpec& spec, const std::filesystem::path& output_dir);

// ---------------------------------------------------------------------------
// Finite-size study

struct FiniteSizeSpec {
  ScalingConfig base;  ///< d is overwritten from d_list
  std::vector<int> d_list;
  int seeds = 4;
  std::uint64_t first_seed = 1;
  double window = 0.25;
  double t_end = 30.0;
  int record = 200;
  /// "copies" starts every student on a teacher unit; otherwise
  /// "combination" or "gaussian".
  std::string init = "copies";
  int jobs = 0;
};

struct FiniteSizeRow {
  int d = 0;
  std::uint64_t seed = 0;
  double r_inf = 0.0;
  double window_std = 0.0;
};

struct FiniteSizeResult {
  std::vector<FiniteSizeRow> runs;
  std::vector<std::pair<double, double>> means;  ///< (d, mean over seeds)
  PowerLawFit fit;
};

Json to_json(const FiniteSizeSpec& spec);
FiniteSizeSpec finite_size_spec_from_json(const Json& j);
FiniteSizeResult finite_size_study(const FiniteSizeSpec& spec);

// ---------------------------------------------------------------------------
// SGD to ODE convergence

struct ConvergenceSpec {
  ScalingConfig base;  ///< d is overwritten from d_list
  std::vector<int> d_list;
  int seeds = 8;
  std::uint64_t first_seed = 1;
  /// Seed of the shared combination matrix.
  std::uint64_t init_seed = 0;
  double t_end = 50.0;
  int record = 100;
  double ode_dt = 0.01;
  int jobs = 0;
};

struct ConvergenceRow {
  int d = 0;
  double dt = 0.0;
  double deviation = 0.0;   ///< mean over seeds of sup_t |risk_sgd - risk_ode|
  double std_error = 0.0;
  std::vector<double> per_seed;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  PowerLawFit fit;  ///< deviation against SGD time step
};

Json to_json(const ConvergenceSpec& spec);
ConvergenceSpec convergence_spec_from_json(const Json& j);

/// Throws std::invalid_argument outside the plateau and perfect-learning
/// regimes, where no ODE limit is compared.
ConvergenceResult convergence_rate_study(const ConvergenceSpec& spec);

// ---------------------------------------------------------------------------
// Perturbation testbed

struct PerturbationSpec {
  std::vector<double> eps_list;
  double tau = 1.0;
  double dt = 1e-3;
  /// Overlap instantiation: kappa + delta and the leading-mode comparison.
  bool overlap = true;
  double exponent_sum = 0.5;
  double overlap_tau = 10.0;
  double overlap_dt = 0.01;
  int p0 = 8;
  int k = 4;
  double noise = 1e-3;
  std::uint64_t seed = 1;
};

struct PerturbationRow {
  std::string instance;  ///< "analytic" or "overlap"
  double eps = 0.0;
  long long d = 0;       ///< overlap instance only
  double sup_gap = 0.0;
  double exact_gap = 0.0;  ///< analytic instance only, NaN otherwise
};

struct PerturbationResult {
  std::vector<PerturbationRow> rows;
  /// Present when the instance has at least 3 rows.
  std::optional<PowerLawFit> analytic_fit;
  std::optional<PowerLawFit> overlap_fit;
};

Json to_json(const PerturbationSpec& spec);
PerturbationSpec perturbation_spec_from_json(const Json& j);

/// Analytic pair x' = -x, y' = -y + eps from x(0) = y(0) = 1; returns
/// sup_{t <= tau} |y - x| on the RK4 grid.
double analytic_perturbation_gap(double eps, double tau, double dt);

/// sup_{t <= tau} max |Omega_finite - Omega_leading| for d = eps^(-1/|s|).
double overlap_perturbation_gap(const PerturbationSpec& spec, int d);

PerturbationResult perturbation_testbed(const PerturbationSpec& spec);

// ---------------------------------------------------------------------------
// Kernel check

struct KernelCheckSpec {
  std::int64_t samples = 1000000;
  int trials = 50;
  std::uint64_t seed = 1;
  int jobs = 0;
};

struct KernelCheckRow {
  KernelKind kind = KernelKind::SigmaSigma;
  int trial = 0;
  Matrix cov;
  double closed = 0.0;
  McEstimate mc;
  double z_score = 0.0;
};

struct KernelCheckResult {
  std::vector<KernelCheckRow> rows;
  /// Count of |z| > 3 per kernel kind, in kernel order.
  std::vector<std::pair<KernelKind, int>> failures;
};

Json to_json(const KernelCheckSpec& spec);
KernelCheckSpec kernel_check_spec_from_json(const Json& j);
KernelCheckResult kernel_check(const KernelCheckSpec& spec);

std::string finite_size_csv(const FiniteSizeResult& result);
std::string convergence_csv(const ConvergenceResult& result);
std::string perturbation_csv(const PerturbationResult& result);
std::string kernel_check_csv(const KernelCheckResult& result);

}  // namespace odedyn
