// Command-line front end: single trajectories, sweeps and the studies.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "odedyn/experiments.hpp"

using namespace odedyn;

namespace {

const std::vector<std::string> kModes{"plateau", "green", "orange", "finite-d"};
const std::vector<std::string> kInits{"combination", "gaussian"};
const std::vector<std::string> kConventions{"half", "plain"};

struct ScalingFlags {
  ScalingConfig config;

  void add(CLI::App* cmd, bool with_d, bool with_width) {
    cmd->add_option("--kappa", config.kappa, "width exponent: p = p0 d^kappa")->capture_default_str();
    cmd->add_option("--delta", config.delta, "learning-rate exponent: gamma = gamma0 d^-delta")
        ->capture_default_str();
    cmd->add_option("--noise", config.noise, "label-noise variance")->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    if (with_width) {
      cmd->add_option("--p0", config.p0, "base student width")->capture_default_str()
          ->check(CLI::PositiveNumber);
      cmd->add_option("--k", config.k, "teacher width")->capture_default_str()->check(CLI::PositiveNumber);
      cmd->add_option("--gamma0", config.gamma0, "base learning rate (default: p0)");
    }
    if (with_d) {
      cmd->add_option("--d", config.d, "input dimension")->capture_default_str()
          ->check(CLI::PositiveNumber);
    }
  }
};

void report(const std::filesystem::path& dir) {
  const Json manifest = Json::parse(read_file(dir / "manifest.json"));
  std::cout << dir.string() << "\n";
  if (!manifest.at("summary").empty()) std::cout << manifest.at("summary").dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online SGD and overlap ODEs for two-layer teacher-student networks"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  // ode / sgd
  RunSpec ode_spec;
  ode_spec.kind = RunSpec::Kind::Ode;
  ScalingFlags ode_scaling;
  std::string ode_mode = "plateau";
  std::string ode_init = "combination";
  std::string ode_convention = "half";
  std::string ode_format = "csv";
  std::string ode_out = "runs";
  auto* ode = app.add_subcommand("ode", "integrate the overlap ODEs");
  ode_scaling.add(ode, true, true);
  ode->add_option("--mode", ode_mode, "ODE mode")->check(CLI::IsMember(kModes))->capture_default_str();
  ode->add_option("--t-end", ode_spec.t_end, "end time in regime units")->capture_default_str();
  ode->add_option("--dt", ode_spec.dt, "RK4 step")->capture_default_str();
  ode->add_option("--record", ode_spec.record, "number of record intervals")->capture_default_str();
  ode->add_option("--init", ode_init, "student initialization")->check(CLI::IsMember(kInits))
      ->capture_default_str();
  ode->add_option("--seed", ode_spec.seed, "seed")->capture_default_str();
  ode->add_option("--out", ode_out, "output directory")->capture_default_str();
  ode->add_option("--risk-convention", ode_convention, "risk prefactor: half or plain")
      ->check(CLI::IsMember(kConventions))->capture_default_str();
  ode->add_flag("--snapshots", ode_spec.snapshots, "also record Q and M");
  ode->add_option("--format", ode_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  ode->add_flag("--allow-mismatch", ode_spec.allow_mismatch,
                "integrate a mode outside its regime");

  RunSpec sgd_spec;
  sgd_spec.kind = RunSpec::Kind::Sgd;
  sgd_spec.record = 400;
  ScalingFlags sgd_scaling;
  std::string sgd_init = "combination";
  std::string sgd_convention = "half";
  std::string sgd_format = "csv";
  std::string sgd_label_noise = "gaussian";
  std::string sgd_out = "runs";
  auto* sgd = app.add_subcommand("sgd", "simulate one-pass SGD");
  sgd_scaling.add(sgd, true, true);
  sgd->add_option("--t-end", sgd_spec.t_end, "end time in regime units")->capture_default_str();
  sgd->add_option("--record", sgd_spec.record, "number of record points")->capture_default_str();
  sgd->add_option("--init", sgd_init, "student initialization")->check(CLI::IsMember(kInits))
      ->capture_default_str();
  sgd->add_option("--seed", sgd_spec.seed, "seed")->capture_default_str();
  sgd->add_option("--out", sgd_out, "output directory")->capture_default_str();
  sgd->add_option("--risk-convention", sgd_convention, "risk prefactor: half or plain")
      ->check(CLI::IsMember(kConventions))->capture_default_str();
  sgd->add_option("--label-noise", sgd_label_noise, "gaussian or rademacher")
      ->check(CLI::IsMember({"gaussian", "rademacher"}));
  sgd->add_flag("--snapshots", sgd_spec.snapshots, "also record Q and M");
  sgd->add_option("--format", sgd_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  // sweep
  std::string sweep_path;
  int sweep_jobs = 0;
  std::string sweep_out;
  auto* sw = app.add_subcommand("sweep", "run a grid of ODE or SGD runs from a JSON spec");
  sw->add_option("--spec", sweep_path, "sweep description")->required()->check(CLI::ExistingFile);
  sw->add_option("--jobs", sweep_jobs, "parallel runs (capped by ODEDYN_THREADS)");
  sw->add_option("--out", sweep_out, "override the spec's output_dir");

  // finite-size
  FiniteSizeSpec fs;
  fs.base.noise = 1e-3;
  fs.base.delta = 0.5;
  ScalingFlags fs_scaling;
  fs_scaling.config = fs.base;
  std::string fs_out = "runs";
  auto* fsc = app.add_subcommand("finite-size", "fit the asymptotic risk against d");
  fs_scaling.add(fsc, false, true);
  fsc->add_option("--d-list", fs.d_list, "dimensions")->delimiter(',')->required();
  fsc->add_option("--seeds", fs.seeds, "seeds per dimension")->capture_default_str();
  fsc->add_option("--window", fs.window, "tail fraction averaged")->capture_default_str();
  fsc->add_option("--t-end", fs.t_end, "end time in regime units")->capture_default_str();
  fsc->add_option("--record", fs.record, "record intervals")->capture_default_str();
  fsc->add_option("--init", fs.init, "copies, combination or gaussian")
      ->check(CLI::IsMember({"copies", "combination", "gaussian"}))->capture_default_str();
  fsc->add_option("--seed", fs.first_seed, "first seed")->capture_default_str();
  fsc->add_option("--jobs", fs.jobs, "parallel runs");
  fsc->add_option("--out", fs_out, "output directory")->capture_default_str();

  // convergence-rate
  ConvergenceSpec cr;
  cr.base.noise = 1e-3;
  ScalingFlags cr_scaling;
  cr_scaling.config = cr.base;
  std::string cr_out = "runs";
  auto* crc = app.add_subcommand("convergence-rate", "SGD to ODE deviation against d");
  cr_scaling.add(crc, false, true);
  crc->add_option("--d-list", cr.d_list, "dimensions")->delimiter(',')->required();
  crc->add_option("--seeds", cr.seeds, "seeds per dimension")->capture_default_str();
  crc->add_option("--t-end", cr.t_end, "horizon of the sup")->capture_default_str();
  crc->add_option("--record", cr.record, "record intervals")->capture_default_str();
  crc->add_option("--ode-dt", cr.ode_dt, "largest RK4 step")->capture_default_str();
  crc->add_option("--seed", cr.first_seed, "first SGD seed")->capture_default_str();
  crc->add_option("--init-seed", cr.init_seed, "seed of the shared combination")->capture_default_str();
  crc->add_option("--jobs", cr.jobs, "parallel runs");
  crc->add_option("--out", cr_out, "output directory")->capture_default_str();

  // kernel-check
  KernelCheckSpec kc;
  std::string kc_out = "runs";
  auto* kcc = app.add_subcommand("kernel-check", "closed-form kernels against Monte Carlo");
  kcc->add_option("--samples", kc.samples, "Monte Carlo samples per covariance")->capture_default_str();
  kcc->add_option("--trials", kc.trials, "random covariances per kernel")->capture_default_str();
  kcc->add_option("--seed", kc.seed, "seed")->capture_default_str();
  kcc->add_option("--jobs", kc.jobs, "parallel estimates");
  kcc->add_option("--out", kc_out, "output directory")->capture_default_str();

  // perturbation
  PerturbationSpec pt;
  bool pt_no_overlap = false;
  std::string pt_out = "runs";
  auto* ptc = app.add_subcommand("perturbation", "ODE perturbation gap against eps");
  ptc->add_option("--eps-list", pt.eps_list, "perturbation scales")->delimiter(',')->required();
  ptc->add_option("--tau", pt.tau, "horizon")->capture_default_str();
  ptc->add_option("--dt", pt.dt, "RK4 step of the analytic pair")->capture_default_str();
  ptc->add_flag("--no-overlap", pt_no_overlap, "skip the overlap-ODE instance");
  ptc->add_option("--exponent-sum", pt.exponent_sum, "kappa + delta of the overlap instance")
      ->capture_default_str();
  ptc->add_option("--overlap-tau", pt.overlap_tau, "horizon of the overlap instance")
      ->capture_default_str();
  ptc->add_option("--seed", pt.seed, "seed of the initial combination")->capture_default_str();
  ptc->add_option("--out", pt_out, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ode) {
      ode_spec.scaling = ode_scaling.config;
      ode_spec.mode = ode_mode_from_string(ode_mode);
      ode_spec.init = student_init_from_string(ode_init);
      ode_spec.convention = risk_convention_from_string(ode_convention);
      ode_spec.format = ode_format == "json" ? OutputFormat::Json : OutputFormat::Csv;
      report(run_phase_point(ode_spec, ode_out));
    } else if (*sgd) {
      sgd_spec.scaling = sgd_scaling.config;
      sgd_spec.init = student_init_from_string(sgd_init);
      sgd_spec.convention = risk_convention_from_string(sgd_convention);
      sgd_spec.label_noise = label_noise_from_string(sgd_label_noise);
      sgd_spec.format = sgd_format == "json" ? OutputFormat::Json : OutputFormat::Csv;
      report(run_phase_point(sgd_spec, sgd_out));
    } else if (*sw) {
      ExperimentSpec spec = load_experiment_spec(sweep_path);
      if (!sweep_out.empty()) spec.output_dir = sweep_out;
      const SweepResult result = sweep(spec, sweep_jobs);
      for (const auto& dir : result.run_dirs) std::cout << dir.string() << "\n";
      std::cout << result.manifest.string() << "\n";
    } else if (*fsc) {
      fs.base = fs_scaling.config;
      report(run_and_write(fs_out, "finite-size", to_json(fs), fs.jobs));
    } else if (*crc) {
      cr.base = cr_scaling.config;
      report(run_and_write(cr_out, "convergence-rate", to_json(cr), cr.jobs));
    } else if (*kcc) {
      report(run_and_write(kc_out, "kernel-check", to_json(kc), kc.jobs));
    } else if (*ptc) {
      pt.overlap = !pt_no_overlap;
      report(run_and_write(pt_out, "perturbation", to_json(pt)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
