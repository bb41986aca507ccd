#include "odedyn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace odedyn {

// ---------------------------------------------------------------------------
// Parallel execution

int thread_cap() {
  if (const char* env = std::getenv("ODEDYN_THREADS"); env != nullptr && *env != '\0') {
    int value = 0;
    const char* end = env + std::char_traits<char>::length(env);
    const auto res = std::from_chars(env, end, value);
    if (res.ec != std::errc{} || res.ptr != end || value < 1) {
      throw std::invalid_argument("ODEDYN_THREADS must be a positive integer, got '" +
                                  std::string(env) + "'");
    }
    return value;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int effective_jobs(int requested) {
  const int cap = thread_cap();
  return requested <= 0 ? cap : std::min(requested, cap);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      task(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto workers =
      static_cast<std::size_t>(std::min<std::size_t>(effective_jobs(jobs), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Fits

PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("power-law fit needs at least 3 points");
  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y)) {
      std::ostringstream msg;
      msg << "power-law fit needs positive finite values, got (" << x << ", " << y << ")";
      throw std::invalid_argument(msg.str());
    }
    xs.push_back(std::log(x));
    ys.push_back(std::log(y));
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("power-law fit needs distinct x values");
  PowerLawFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  fit.points = points;
  return fit;
}

PowerLawFit finite_size_slope(const std::vector<std::pair<double, double>>& points) {
  return fit_power_law(points);
}

Json to_json(const PowerLawFit& fit) {
  Json pts = Json::array();
  for (const auto& [x, y] : fit.points) pts.push_back({x, y});
  return {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r_squared", fit.r_squared},
          {"points", pts}};
}

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

Json scaling_json(const ScalingConfig& c) {
  return {{"d", c.d},         {"p0", c.p0},       {"k", c.k},
          {"kappa", c.kappa}, {"delta", c.delta}, {"gamma0", c.effective_gamma0()},
          {"noise", c.noise}};
}

ScalingConfig scaling_from_json(const Json& j, ScalingConfig c = {}) {
  if (!j.is_object()) throw std::invalid_argument("scaling config must be a JSON object");
  c.d = j.value("d", c.d);
  c.p0 = j.value("p0", c.p0);
  c.k = j.value("k", c.k);
  c.kappa = j.value("kappa", c.kappa);
  c.delta = j.value("delta", c.delta);
  c.gamma0 = j.value("gamma0", c.gamma0);
  c.noise = j.value("noise", c.noise);
  return c;
}

std::string_view to_string(RunSpec::Kind kind) { return kind == RunSpec::Kind::Ode ? "ode" : "sgd"; }

RunSpec::Kind run_kind_from_string(std::string_view name) {
  if (name == "ode") return RunSpec::Kind::Ode;
  if (name == "sgd") return RunSpec::Kind::Sgd;
  throw std::invalid_argument("run kind must be 'ode' or 'sgd', got '" + std::string(name) + "'");
}

std::string_view to_string(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "json"; }

OutputFormat output_format_from_string(std::string_view name) {
  if (name == "csv") return OutputFormat::Csv;
  if (name == "json") return OutputFormat::Json;
  throw std::invalid_argument("format must be 'csv' or 'json', got '" + std::string(name) + "'");
}

std::string_view to_string(LabelNoise n) {
  return n == LabelNoise::Gaussian ? "gaussian" : "rademacher";
}

std::string manifest_text(const Json& manifest) { return manifest.dump(2) + "\n"; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Single trajectories

Json to_json(const RunSpec& s) {
  Json j = {{"kind", to_string(s.kind)},
            {"scaling", scaling_json(s.scaling)},
            {"t_end", s.t_end},
            {"record", s.record},
            {"init", to_string(s.init)},
            {"seed", s.seed},
            {"convention", to_string(s.convention)},
            {"snapshots", s.snapshots},
            {"format", to_string(s.format)}};
  if (s.kind == RunSpec::Kind::Ode) {
    j["mode"] = to_string(s.mode);
    j["dt"] = s.dt;
    j["allow_mismatch"] = s.allow_mismatch;
  } else {
    j["label_noise"] = to_string(s.label_noise);
  }
  return j;
}

RunSpec run_spec_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("run spec must be a JSON object");
  RunSpec s;
  s.kind = run_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("scaling")) s.scaling = scaling_from_json(j.at("scaling"));
  s.t_end = j.value("t_end", s.t_end);
  s.record = j.value("record", s.record);
  s.init = student_init_from_string(j.value("init", std::string("combination")));
  s.seed = j.value("seed", s.seed);
  s.convention = risk_convention_from_string(j.value("convention", std::string("half")));
  s.snapshots = j.value("snapshots", s.snapshots);
  s.format = output_format_from_string(j.value("format", std::string("csv")));
  s.mode = ode_mode_from_string(j.value("mode", std::string("plateau")));
  s.dt = j.value("dt", s.dt);
  s.allow_mismatch = j.value("allow_mismatch", s.allow_mismatch);
  s.label_noise = label_noise_from_string(j.value("label_noise", std::string("gaussian")));
  return s;
}

OverlapState initial_overlaps(const RunSpec& spec) {
  spec.scaling.validate();
  const int p = spec.scaling.width();
  if (spec.init == StudentInit::Kind::Combination) {
    return combination_overlaps(sample_combination(p, spec.scaling.k, spec.seed));
  }
  return overlap_from_weights(init_student_gaussian(p, spec.scaling.d, spec.seed),
                              build_symmetric_teacher(spec.scaling.k, spec.scaling.d, spec.seed));
}

OdeTrajectory run_ode(const RunSpec& spec) {
  if (spec.record < 1) throw std::invalid_argument("record must be at least 1");
  const std::int64_t steps = step_count(spec.t_end, spec.dt);
  const int stride = static_cast<int>(
      std::clamp<std::int64_t>(steps / spec.record, 1, std::numeric_limits<int>::max()));
  IntegrateOptions options;
  options.record_states = spec.snapshots;
  options.allow_mismatch = spec.allow_mismatch;
  options.convention = spec.convention;
  return integrate(initial_overlaps(spec), spec.mode, spec.scaling, spec.t_end, spec.dt, stride,
                   options);
}

SgdTrajectory run_sgd(const RunSpec& spec) {
  SgdOptions options;
  options.label_noise = spec.label_noise;
  options.convention = spec.convention;
  options.record_states = spec.snapshots;
  const StudentInit init = spec.init == StudentInit::Kind::Combination
                               ? StudentInit::combination()
                               : StudentInit::gaussian();
  return run_sgd(spec.scaling, init, spec.seed, spec.t_end, spec.record, options);
}

namespace {

Json snapshots_array(const std::vector<double>& times, const std::vector<OverlapState>& states) {
  Json out = Json::array();
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(snapshot_json(times[i], states[i]));
  return out;
}

}  // namespace

CommandOutput execute_run(const RunSpec& spec) {
  CommandOutput out;
  std::vector<double> times;
  std::vector<double> risks;
  std::vector<OverlapState> states;
  Json json_traj;
  std::string csv;
  if (spec.kind == RunSpec::Kind::Ode) {
    OdeTrajectory traj = run_ode(spec);
    csv = ode_trajectory_csv(traj);
    json_traj = {{"t", traj.times}, {"risk", traj.risks}};
    times = std::move(traj.times);
    risks = std::move(traj.risks);
    states = std::move(traj.states);
  } else {
    SgdTrajectory traj = run_sgd(spec);
    csv = sgd_trajectory_csv(traj);
    json_traj = {{"step", traj.steps}, {"t", traj.times}, {"risk", traj.risks}};
    times = std::move(traj.times);
    risks = std::move(traj.risks);
    states = std::move(traj.states);
  }
  if (spec.format == OutputFormat::Csv) {
    out.files.push_back({"trajectory.csv", std::move(csv)});
    if (spec.snapshots) {
      out.files.push_back({"snapshots.json", snapshots_array(times, states).dump() + "\n"});
    }
  } else {
    if (spec.snapshots) json_traj["snapshots"] = snapshots_array(times, states);
    out.files.push_back({"trajectory.json", json_traj.dump() + "\n"});
  }
  out.summary = {{"points", risks.size()},
                 {"terminal_t", times.empty() ? 0.0 : times.back()},
                 {"terminal_risk", risks.empty() ? 0.0 : risks.back()},
                 {"regime", to_string(classify_regime(spec.scaling))}};
  return out;
}

std::string param_hash(const std::string& kind, const Json& config) {
  return fnv1a_hex(Json{{"kind", kind}, {"config", config}}.dump());
}

std::filesystem::path run_and_write(const std::filesystem::path& output_dir,
                                    const std::string& kind, const Json& config, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  CommandOutput out = execute_command(kind, config, jobs);
  const double wall = seconds_since(t0);

  const std::filesystem::path dir = output_dir / kind / param_hash(kind, config);
  Json files = Json::array();
  for (const auto& f : out.files) {
    write_file(dir / f.name, f.content);
    files.push_back(f.name);
  }
  Json manifest = {{"kind", kind},
                   {"config", config},
                   {"version", version_string()},
                   {"wall_time_seconds", wall},
                   {"files", files},
                   {"summary", out.summary}};
  if (config.contains("seed")) manifest["seed"] = config.at("seed");
  write_file(dir / "manifest.json", manifest_text(manifest));
  return dir;
}

CommandOutput reproduce(const Json& manifest) {
  return execute_command(manifest.at("kind").get<std::string>(), manifest.at("config"));
}

namespace {

CommandOutput finite_size_output(const FiniteSizeSpec& spec) {
  const FiniteSizeResult result = finite_size_study(spec);
  CommandOutput out;
  out.files.push_back({"finite_size.csv", finite_size_csv(result)});
  CsvWriter means({"d", "mean_r_inf"});
  for (const auto& [d, r] : result.means) means.add_row({d, r});
  out.files.push_back({"finite_size_means.csv", means.str()});
  out.summary = {{"fit", to_json(result.fit)}};
  return out;
}

CommandOutput convergence_output(const ConvergenceSpec& spec) {
  const ConvergenceResult result = convergence_rate_study(spec);
  CommandOutput out;
  out.files.push_back({"convergence_rate.csv", convergence_csv(result)});
  out.summary = {{"fit", to_json(result.fit)}};
  return out;
}

CommandOutput perturbation_output(const PerturbationSpec& spec) {
  const PerturbationResult result = perturbation_testbed(spec);
  CommandOutput out;
  out.files.push_back({"perturbation.csv", perturbation_csv(result)});
  if (result.analytic_fit) out.summary["analytic_fit"] = to_json(*result.analytic_fit);
  if (result.overlap_fit) out.summary["overlap_fit"] = to_json(*result.overlap_fit);
  return out;
}

CommandOutput kernel_check_output(const KernelCheckSpec& spec) {
  const KernelCheckResult result = kernel_check(spec);
  CommandOutput out;
  out.files.push_back({"kernel_check.csv", kernel_check_csv(result)});
  Json failures = Json::object();
  for (const auto& [kind, count] : result.failures) failures[std::string(to_string(kind))] = count;
  out.summary = {{"failures_beyond_3_sigma", failures}};
  return out;
}

}  // namespace

CommandOutput execute_command(const std::string& kind, const Json& config, int jobs) {
  if (kind == "ode" || kind == "sgd") {
    RunSpec spec = run_spec_from_json(config);
    if (to_string(spec.kind) != kind) {
      throw std::invalid_argument("config kind '" + std::string(to_string(spec.kind)) +
                                  "' does not match command '" + kind + "'");
    }
    return execute_run(spec);
  }
  if (kind == "finite-size") {
    FiniteSizeSpec spec = finite_size_spec_from_json(config);
    spec.jobs = jobs;
    return finite_size_output(spec);
  }
  if (kind == "convergence-rate") {
    ConvergenceSpec spec = convergence_spec_from_json(config);
    spec.jobs = jobs;
    return convergence_output(spec);
  }
  if (kind == "perturbation") return perturbation_output(perturbation_spec_from_json(config));
  if (kind == "kernel-check") {
    KernelCheckSpec spec = kernel_check_spec_from_json(config);
    spec.jobs = jobs;
    return kernel_check_output(spec);
  }
  throw std::invalid_argument("unknown command kind: " + kind);
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

template <class T>
std::vector<T> grid_list(const Json& grid, const char* key, T fallback) {
  if (!grid.contains(key)) return {fallback};
  const Json& v = grid.at(key);
  if (!v.is_array()) throw std::invalid_argument(std::string("grid '") + key + "' must be a list");
  if (v.empty()) throw std::invalid_argument(std::string("grid '") + key + "' is empty");
  return v.get<std::vector<T>>();
}

}  // namespace

ExperimentSpec experiment_spec_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("experiment spec must be a JSON object");
  ExperimentSpec spec;
  spec.kind = run_kind_from_string(j.value("kind", std::string("ode")));

  RunSpec& b = spec.base;
  b.kind = spec.kind;
  if (j.contains("base")) b.scaling = scaling_from_json(j.at("base"));
  b.t_end = j.value("t_end", b.t_end);
  b.dt = j.value("dt", b.dt);
  b.record = j.value("record_points", b.record);
  b.init = student_init_from_string(j.value("init", std::string("combination")));
  b.convention = risk_convention_from_string(j.value("convention", std::string("half")));
  b.label_noise = label_noise_from_string(j.value("label_noise", std::string("gaussian")));
  b.snapshots = j.value("snapshots", b.snapshots);
  b.format = output_format_from_string(j.value("format", std::string("csv")));
  b.seed = j.value("seed", b.seed);
  spec.output_dir = j.value("output_dir", std::string("runs"));

  const Json grid = j.value("grid", Json::object());
  if (!grid.is_object()) throw std::invalid_argument("'grid' must be a JSON object");
  for (const auto& [key, _] : grid.items()) {
    static const char* known[] = {"d", "noise", "kappa", "delta", "seeds", "mode"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; })) {
      throw std::invalid_argument("unknown grid key '" + key + "'");
    }
  }
  spec.d = grid_list<int>(grid, "d", b.scaling.d);
  spec.noise = grid_list<double>(grid, "noise", b.scaling.noise);
  spec.kappa = grid_list<double>(grid, "kappa", b.scaling.kappa);
  spec.delta = grid_list<double>(grid, "delta", b.scaling.delta);
  spec.seeds = grid_list<std::uint64_t>(grid, "seeds", b.seed);
  spec.modes = grid_list<std::string>(grid, "mode", j.value("mode", std::string("auto")));
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_spec_from_json(j);
}

std::vector<RunSpec> expand_grid(const ExperimentSpec& spec) {
  if (spec.d.empty() || spec.noise.empty() || spec.kappa.empty() || spec.delta.empty() ||
      spec.seeds.empty() || spec.modes.empty()) {
    throw std::invalid_argument("experiment grid is empty");
  }
  std::vector<RunSpec> runs;
  const std::vector<std::string> sgd_modes{"-"};
  const auto& modes = spec.kind == RunSpec::Kind::Ode ? spec.modes : sgd_modes;
  for (int d : spec.d) {
    for (double noise : spec.noise) {
      for (double kappa : spec.kappa) {
        for (double delta : spec.delta) {
          for (const auto& mode : modes) {
            for (std::uint64_t seed : spec.seeds) {
              RunSpec r = spec.base;
              r.kind = spec.kind;
              r.scaling.d = d;
              r.scaling.noise = noise;
              r.scaling.kappa = kappa;
              r.scaling.delta = delta;
              r.seed = seed;
              r.scaling.validate();
              if (spec.kind == RunSpec::Kind::Ode) {
                r.mode = mode == "auto" ? leading_mode(classify_regime(r.scaling))
                                        : ode_mode_from_string(mode);
              }
              runs.push_back(std::move(r));
            }
          }
        }
      }
    }
  }
  return runs;
}

std::filesystem::path run_phase_point(const RunSpec& spec, const std::filesystem::path& output_dir) {
  return run_and_write(output_dir, std::string(to_string(spec.kind)), to_json(spec));
}

SweepResult sweep(const ExperimentSpec& spec, int jobs) {
  const std::vector<RunSpec> runs = expand_grid(spec);
  Json configs = Json::array();
  for (const auto& r : runs) configs.push_back(to_json(r));

  const auto t0 = std::chrono::steady_clock::now();
  const std::filesystem::path sweep_dir = spec.output_dir / "sweep" / param_hash("sweep", configs);
  std::filesystem::create_directories(sweep_dir);
  std::ofstream log(sweep_dir / "progress.log", std::ios::app);
  if (!log) throw std::runtime_error("cannot open " + (sweep_dir / "progress.log").string());
  std::mutex log_mutex;

  SweepResult result;
  result.run_dirs.resize(runs.size());
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    try {
      result.run_dirs[i] = run_phase_point(runs[i], spec.output_dir);
    } catch (const std::exception& e) {
      std::lock_guard lock(log_mutex);
      log << "failed " << i + 1 << "/" << runs.size() << " " << e.what() << "\n" << std::flush;
      throw;
    }
    std::lock_guard lock(log_mutex);
    log << "done " << i + 1 << "/" << runs.size() << " "
        << result.run_dirs[i].lexically_relative(spec.output_dir).generic_string() << " "
        << seconds_since(start) << "s\n"
        << std::flush;
  });

  Json entries = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    entries.push_back({{"dir", result.run_dirs[i].lexically_relative(spec.output_dir).generic_string()},
                       {"config", configs[i]}});
  }
  Json manifest = {{"kind", "sweep"},
                   {"runs", entries},
                   {"version", version_string()},
                   {"wall_time_seconds", seconds_since(t0)}};
  result.manifest = sweep_dir / "manifest.json";
  write_file(result.manifest, manifest_text(manifest));
  return result;
}

// ---------------------------------------------------------------------------
// Finite-size study

Json to_json(const FiniteSizeSpec& s) {
  return {{"scaling", scaling_json(s.base)}, {"d_list", s.d_list}, {"seeds", s.seeds},
          {"first_seed", s.first_seed},      {"window", s.window}, {"t_end", s.t_end},
          {"record", s.record},              {"init", s.init}};
}

FiniteSizeSpec finite_size_spec_from_json(const Json& j) {
  FiniteSizeSpec s;
  if (j.contains("scaling")) s.base = scaling_from_json(j.at("scaling"));
  s.d_list = j.at("d_list").get<std::vector<int>>();
  s.seeds = j.value("seeds", s.seeds);
  s.first_seed = j.value("first_seed", s.first_seed);
  s.window = j.value("window", s.window);
  s.t_end = j.value("t_end", s.t_end);
  s.record = j.value("record", s.record);
  s.init = j.value("init", s.init);
  return s;
}

namespace {

std::vector<std::int64_t> linear_schedule(std::int64_t total, int intervals) {
  std::vector<std::int64_t> steps;
  for (int i = 0; i <= intervals; ++i) {
    steps.push_back(static_cast<std::int64_t>(
        std::llround(static_cast<double>(total) * i / static_cast<double>(intervals))));
  }
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

StudentInit finite_size_init(const std::string& name, int p, int k) {
  if (name == "copies") return StudentInit::combination(teacher_copies(p, k));
  if (name == "combination") return StudentInit::combination();
  if (name == "gaussian") return StudentInit::gaussian();
  throw std::invalid_argument("init must be copies, combination or gaussian, got '" + name + "'");
}

}  // namespace

FiniteSizeResult finite_size_study(const FiniteSizeSpec& spec) {
  if (spec.d_list.size() < 3) throw std::invalid_argument("finite-size study needs >= 3 dimensions");
  if (spec.seeds < 1) throw std::invalid_argument("finite-size study needs >= 1 seed");
  if (spec.record < 4) throw std::invalid_argument("record must be at least 4");
  std::vector<ScalingConfig> configs;
  for (int d : spec.d_list) {
    ScalingConfig c = spec.base;
    c.d = d;
    c.validate();
    configs.push_back(c);
  }
  (void)finite_size_init(spec.init, 1, 1);

  const std::size_t n_seeds = static_cast<std::size_t>(spec.seeds);
  FiniteSizeResult result;
  result.runs.resize(configs.size() * n_seeds);
  // Largest dimensions first so the slowest runs start early.
  std::vector<std::size_t> order(result.runs.size());
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  parallel_for(order.size(), spec.jobs, [&](std::size_t t) {
    const std::size_t task = order[t];
    const ScalingConfig& c = configs[task / n_seeds];
    const std::uint64_t seed = spec.first_seed + task % n_seeds;
    SimRun run = make_sim_run(c, finite_size_init(spec.init, c.width(), c.k), seed);
    SgdOptions options;
    options.record_steps = linear_schedule(step_count(spec.t_end, run.dt()), spec.record);
    const SgdTrajectory traj = run_sgd(run, spec.t_end, spec.record, options);
    const AsymptoticRisk tail = asymptotic_risk(traj.risks, spec.window);
    result.runs[task] = {c.d, seed, tail.mean, tail.std};
  });

  for (std::size_t i = 0; i < configs.size(); ++i) {
    double sum = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) sum += result.runs[i * n_seeds + s].r_inf;
    result.means.emplace_back(static_cast<double>(configs[i].d), sum / static_cast<double>(n_seeds));
  }
  result.fit = finite_size_slope(result.means);
  return result;
}

// ---------------------------------------------------------------------------
// Convergence study

Json to_json(const ConvergenceSpec& s) {
  return {{"scaling", scaling_json(s.base)}, {"d_list", s.d_list},   {"seeds", s.seeds},
          {"first_seed", s.first_seed},      {"init_seed", s.init_seed}, {"t_end", s.t_end},
          {"record", s.record},              {"ode_dt", s.ode_dt}};
}

ConvergenceSpec convergence_spec_from_json(const Json& j) {
  ConvergenceSpec s;
  if (j.contains("scaling")) s.base = scaling_from_json(j.at("scaling"));
  s.d_list = j.at("d_list").get<std::vector<int>>();
  s.seeds = j.value("seeds", s.seeds);
  s.first_seed = j.value("first_seed", s.first_seed);
  s.init_seed = j.value("init_seed", s.init_seed);
  s.t_end = j.value("t_end", s.t_end);
  s.record = j.value("record", s.record);
  s.ode_dt = j.value("ode_dt", s.ode_dt);
  return s;
}

ConvergenceResult convergence_rate_study(const ConvergenceSpec& spec) {
  const RegimeLabel regime = classify_regime(spec.base);
  if (regime != RegimeLabel::Plateau && regime != RegimeLabel::PerfectLearning) {
    throw std::invalid_argument(std::string("convergence study needs the plateau or "
                                            "perfect-learning regime, got ") +
                                std::string(to_string(regime)));
  }
  if (spec.d_list.size() < 3) throw std::invalid_argument("convergence study needs >= 3 dimensions");
  if (spec.seeds < 1) throw std::invalid_argument("convergence study needs >= 1 seed");
  if (!(spec.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (spec.record < 1) throw std::invalid_argument("record must be at least 1");
  if (!(spec.ode_dt > 0.0)) throw std::invalid_argument("ode_dt must be positive");

  const OdeMode mode = leading_mode(regime);
  const std::size_t n_d = spec.d_list.size();
  const std::size_t n_seeds = static_cast<std::size_t>(spec.seeds);
  std::vector<ScalingConfig> configs;
  std::vector<Matrix> combos;
  for (int d : spec.d_list) {
    ScalingConfig c = spec.base;
    c.d = d;
    c.validate();
    configs.push_back(c);
    combos.push_back(sample_combination(c.width(), c.k, spec.init_seed));
  }

  // ODE on a grid whose step divides the record interval.
  const double interval = spec.t_end / spec.record;
  const int stride = static_cast<int>(std::ceil(interval / spec.ode_dt - 1e-9));
  const double h = interval / stride;
  std::vector<std::vector<double>> ode_risks(n_d);
  parallel_for(n_d, spec.jobs, [&](std::size_t i) {
    const OdeTrajectory traj =
        integrate(combination_overlaps(combos[i]), mode, configs[i], spec.t_end, h, stride);
    if (traj.risks.size() != static_cast<std::size_t>(spec.record) + 1) {
      throw std::logic_error("ODE record grid does not match the SGD schedule");
    }
    ode_risks[i] = traj.risks;
  });

  std::vector<double> sup_dev(n_d * n_seeds);
  parallel_for(sup_dev.size(), spec.jobs, [&](std::size_t task) {
    const std::size_t i = task / n_seeds;
    const std::uint64_t seed = spec.first_seed + task % n_seeds;
    SimRun run = make_sim_run(configs[i], StudentInit::combination(combos[i]), seed);
    SgdOptions options;
    for (int r = 0; r <= spec.record; ++r) {
      options.record_steps.push_back(
          static_cast<std::int64_t>(std::llround(r * interval / run.dt())));
    }
    const SgdTrajectory traj = run_sgd(run, spec.t_end, spec.record + 1, options);
    double sup = 0.0;
    for (std::size_t r = 0; r < traj.risks.size(); ++r) {
      sup = std::max(sup, std::abs(traj.risks[r] - ode_risks[i][r]));
    }
    sup_dev[task] = sup;
  });

  ConvergenceResult result;
  std::vector<std::pair<double, double>> points;
  for (std::size_t i = 0; i < n_d; ++i) {
    ConvergenceRow row;
    row.d = configs[i].d;
    row.dt = time_step(configs[i]);
    row.per_seed.assign(sup_dev.begin() + static_cast<std::ptrdiff_t>(i * n_seeds),
                        sup_dev.begin() + static_cast<std::ptrdiff_t>((i + 1) * n_seeds));
    const double n = static_cast<double>(n_seeds);
    row.deviation = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) / n;
    double var = 0.0;
    for (double v : row.per_seed) var += (v - row.deviation) * (v - row.deviation);
    row.std_error = n_seeds > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    points.emplace_back(row.dt, row.deviation);
    result.rows.push_back(std::move(row));
  }
  result.fit = fit_power_law(points);
  return result;
}

// ---------------------------------------------------------------------------
// Perturbation testbed

Json to_json(const PerturbationSpec& s) {
  return {{"eps_list", s.eps_list},       {"tau", s.tau},       {"dt", s.dt},
          {"overlap", s.overlap},         {"exponent_sum", s.exponent_sum},
          {"overlap_tau", s.overlap_tau}, {"overlap_dt", s.overlap_dt},
          {"p0", s.p0},                   {"k", s.k},           {"noise", s.noise},
          {"seed", s.seed}};
}

PerturbationSpec perturbation_spec_from_json(const Json& j) {
  PerturbationSpec s;
  s.eps_list = j.at("eps_list").get<std::vector<double>>();
  s.tau = j.value("tau", s.tau);
  s.dt = j.value("dt", s.dt);
  s.overlap = j.value("overlap", s.overlap);
  s.exponent_sum = j.value("exponent_sum", s.exponent_sum);
  s.overlap_tau = j.value("overlap_tau", s.overlap_tau);
  s.overlap_dt = j.value("overlap_dt", s.overlap_dt);
  s.p0 = j.value("p0", s.p0);
  s.k = j.value("k", s.k);
  s.noise = j.value("noise", s.noise);
  s.seed = j.value("seed", s.seed);
  return s;
}

double analytic_perturbation_gap(double eps, double tau, double dt) {
  using Pair = Eigen::Vector2d;
  double sup = 0.0;
  auto field = [eps](double, const Pair& y) { return Pair(-y[0], -y[1] + eps); };
  rk4_integrate(Pair(1.0, 1.0), tau, dt, field, [&](std::int64_t, double, const Pair& y) {
    sup = std::max(sup, std::abs(y[1] - y[0]));
  });
  return sup;
}

double overlap_perturbation_gap(const PerturbationSpec& spec, int d) {
  const double s = spec.exponent_sum;
  ScalingConfig c;
  c.d = d;
  c.p0 = spec.p0;
  c.k = spec.k;
  c.kappa = 0.0;
  c.delta = s;
  c.noise = spec.noise;
  c.validate();
  const RegimeLabel regime = classify_regime(c);
  if (regime == RegimeLabel::Plateau) {
    throw std::invalid_argument("perturbation instance needs kappa + delta != 0");
  }
  const OdeMode leading = leading_mode(regime);
  const OverlapState state0 = combination_overlaps(sample_combination(c.width(), c.k, spec.seed));
  IntegrateOptions options;
  options.record_states = true;
  const OdeTrajectory finite =
      integrate(state0, OdeMode::FiniteD, c, spec.overlap_tau, spec.overlap_dt, 1, options);
  const OdeTrajectory lead =
      integrate(state0, leading, c, spec.overlap_tau, spec.overlap_dt, 1, options);
  double sup = 0.0;
  for (std::size_t i = 0; i < finite.states.size(); ++i) {
    sup = std::max({sup, (finite.states[i].Q - lead.states[i].Q).cwiseAbs().maxCoeff(),
                    (finite.states[i].M - lead.states[i].M).cwiseAbs().maxCoeff()});
  }
  return sup;
}

PerturbationResult perturbation_testbed(const PerturbationSpec& spec) {
  if (spec.eps_list.empty()) throw std::invalid_argument("eps list is empty");
  if (!(spec.tau > 0.0)) throw std::invalid_argument("tau must be positive");
  for (double eps : spec.eps_list) {
    if (!(eps > 0.0)) throw std::invalid_argument("every eps must be positive");
  }
  PerturbationResult result;
  std::vector<std::pair<double, double>> analytic;
  for (double eps : spec.eps_list) {
    PerturbationRow row;
    row.instance = "analytic";
    row.eps = eps;
    row.sup_gap = analytic_perturbation_gap(eps, spec.tau, spec.dt);
    row.exact_gap = eps * (1.0 - std::exp(-spec.tau));
    analytic.emplace_back(eps, row.sup_gap);
    result.rows.push_back(row);
  }
  if (analytic.size() >= 3) result.analytic_fit = fit_power_law(analytic);

  if (spec.overlap) {
    const double s = std::abs(spec.exponent_sum);
    if (!(s > 0.0)) throw std::invalid_argument("overlap instance needs kappa + delta != 0");
    std::vector<std::pair<double, double>> overlap;
    for (double eps : spec.eps_list) {
      const double d_real = std::round(std::pow(eps, -1.0 / s));
      if (!(d_real >= 1.0) || d_real > static_cast<double>(INT_MAX)) {
        std::ostringstream msg;
        msg << "eps = " << eps << " maps to an unrepresentable dimension " << d_real;
        throw std::invalid_argument(msg.str());
      }
      const int d = static_cast<int>(d_real);
      PerturbationRow row;
      row.instance = "overlap";
      row.d = d;
      row.eps = std::pow(static_cast<double>(d), -s);
      row.sup_gap = overlap_perturbation_gap(spec, d);
      row.exact_gap = std::numeric_limits<double>::quiet_NaN();
      overlap.emplace_back(row.eps, row.sup_gap);
      result.rows.push_back(row);
    }
    if (overlap.size() >= 3) result.overlap_fit = fit_power_law(overlap);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Kernel check

Json to_json(const KernelCheckSpec& s) {
  return {{"samples", s.samples}, {"trials", s.trials}, {"seed", s.seed}};
}

KernelCheckSpec kernel_check_spec_from_json(const Json& j) {
  KernelCheckSpec s;
  s.samples = j.value("samples", s.samples);
  s.trials = j.value("trials", s.trials);
  s.seed = j.value("seed", s.seed);
  return s;
}

KernelCheckResult kernel_check(const KernelCheckSpec& spec) {
  if (spec.trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (spec.samples < 1000) throw std::invalid_argument("samples must be at least 1000");
  const KernelKind kinds[] = {KernelKind::SigmaSigma, KernelKind::DsigmaLambdaSigma,
                              KernelKind::DsigmaDsigma, KernelKind::DsigmaDsigmaSigmaSigma};
  KernelCheckResult result;
  // Covariances are drawn serially so they do not depend on the job count.
  Rng rng = make_stream(spec.seed, StreamTag::kKernelCheck);
  for (KernelKind kind : kinds) {
    for (int t = 0; t < spec.trials; ++t) {
      KernelCheckRow row;
      row.kind = kind;
      row.trial = t;
      row.cov = random_psd_covariance(kernel_order(kind), rng);
      result.rows.push_back(std::move(row));
    }
  }
  parallel_for(result.rows.size(), spec.jobs, [&](std::size_t i) {
    KernelCheckRow& row = result.rows[i];
    const std::uint64_t mc_seed = spec.seed * 0x100000001b3ULL + i + 1;
    row.closed = closed_form(row.kind, row.cov);
    row.mc = mc_kernel_oracle(row.kind, KernelCovariance{row.cov}, spec.samples, mc_seed);
    const double diff = row.closed - row.mc.mean;
    row.z_score = row.mc.std_error > 0.0 ? diff / row.mc.std_error
                  : diff == 0.0          ? 0.0
                                         : std::copysign(std::numeric_limits<double>::infinity(), diff);
  });
  for (KernelKind kind : kinds) {
    int failures = 0;
    for (const auto& row : result.rows) {
      if (row.kind == kind && !(std::abs(row.z_score) <= 3.0)) ++failures;
    }
    result.failures.emplace_back(kind, failures);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tables

std::string finite_size_csv(const FiniteSizeResult& result) {
  CsvWriter csv({"d", "seed", "r_inf", "window_std"});
  for (const auto& r : result.runs) {
    csv.add_row({std::to_string(r.d), std::to_string(r.seed), format_number(r.r_inf),
                 format_number(r.window_std)});
  }
  return csv.str();
}

std::string convergence_csv(const ConvergenceResult& result) {
  CsvWriter csv({"d", "dt", "deviation", "std_error", "seeds"});
  for (const auto& r : result.rows) {
    csv.add_row({std::to_string(r.d), format_number(r.dt), format_number(r.deviation),
                 format_number(r.std_error), std::to_string(r.per_seed.size())});
  }
  return csv.str();
}

std::string perturbation_csv(const PerturbationResult& result) {
  CsvWriter csv({"instance", "eps", "d", "sup_gap", "exact_gap"});
  for (const auto& r : result.rows) {
    csv.add_row({r.instance, format_number(r.eps), r.d > 0 ? std::to_string(r.d) : "",
                 format_number(r.sup_gap), std::isnan(r.exact_gap) ? "" : format_number(r.exact_gap)});
  }
  return csv.str();
}

std::string kernel_check_csv(const KernelCheckResult& result) {
  constexpr int kMaxEntries = 10;  // upper triangle of a 4 x 4 covariance
  std::vector<std::string> header{"kind"};
  for (int i = 0; i < kMaxEntries; ++i) header.push_back("cov_" + std::to_string(i));
  for (const char* name : {"closed", "mc_mean", "mc_stderr", "z_score"}) header.emplace_back(name);
  CsvWriter csv(std::move(header));
  for (const auto& r : result.rows) {
    std::vector<std::string> cells{std::string(to_string(r.kind))};
    for (Eigen::Index a = 0; a < r.cov.rows(); ++a) {
      for (Eigen::Index b = a; b < r.cov.cols(); ++b) cells.push_back(format_number(r.cov(a, b)));
    }
    cells.resize(1 + kMaxEntries);
    for (double v : {r.closed, r.mc.mean, r.mc.std_error, r.z_score}) cells.push_back(format_number(v));
    csv.add_row(cells);
  }
  return csv.str();
}

}  // namespace odedyn
