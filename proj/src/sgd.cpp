#include "odedyn/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "odedyn/kernels.hpp"
#include "odedyn/ode.hpp"

namespace odedyn {

LabelNoise label_noise_from_string(std::string_view name) {
  if (name == "gaussian") return LabelNoise::Gaussian;
  if (name == "rademacher") return LabelNoise::Rademacher;
  throw std::invalid_argument("unknown label noise: " + std::string(name));
}

StudentInit::Kind student_init_from_string(std::string_view name) {
  if (name == "combination") return StudentInit::Kind::Combination;
  if (name == "gaussian") return StudentInit::Kind::Gaussian;
  throw std::invalid_argument("unknown initialization: " + std::string(name));
}

std::string_view to_string(StudentInit::Kind kind) {
  return kind == StudentInit::Kind::Combination ? "combination" : "gaussian";
}

void apply_sgd_update(Matrix& W, const Matrix& Wstar, double gamma, double noise,
                      StepSample& sample) {
  const double d = static_cast<double>(W.cols());
  const double inv_root_d = 1.0 / std::sqrt(d);
  const int p = static_cast<int>(W.rows());
  const int k = static_cast<int>(Wstar.rows());

  sample.fields.noalias() = (W * sample.x) * inv_root_d;
  sample.teacher_fields.noalias() = (Wstar * sample.x) * inv_root_d;

  double target = 0.0;
  for (int r = 0; r < k; ++r) target += sigma(sample.teacher_fields[r]);
  double prediction = 0.0;
  for (int j = 0; j < p; ++j) prediction += sigma(sample.fields[j]);
  sample.error = target / k - prediction / p + std::sqrt(noise) * sample.zeta;

  const double scale = gamma / (static_cast<double>(p) * std::sqrt(d)) * sample.error;
  Vector coeff(p);
  for (int j = 0; j < p; ++j) coeff[j] = scale * sigma_prime(sample.fields[j]);
  if (!coeff.allFinite()) throw IntegrationError("SGD update produced non-finite coefficients");
  W.noalias() += coeff * sample.x.transpose();
}

SimRun::SimRun(const ScalingConfig& config, std::uint64_t seed, Matrix W, Matrix Wstar,
               LabelNoise label_noise)
    : config_(config),
      seed_(seed),
      W_(std::move(W)),
      Wstar_(std::move(Wstar)),
      label_noise_(label_noise),
      rng_(make_stream(seed, StreamTag::kSgd)),
      dt_(time_step(config)),
      gamma_(config.learning_rate()) {
  config_.validate();
  if (W_.cols() != config_.d || Wstar_.cols() != config_.d) {
    throw std::invalid_argument("weight matrices do not match the configured dimension");
  }
  if (Wstar_.rows() != config_.k) {
    throw std::invalid_argument("teacher does not have k rows");
  }
  sample_.x.resize(config_.d);
  sample_.fields.resize(W_.rows());
  sample_.teacher_fields.resize(Wstar_.rows());
}

const StepSample& SimRun::sgd_step() {
  for (int i = 0; i < config_.d; ++i) sample_.x[i] = rng_.normal();
  sample_.zeta = label_noise_ == LabelNoise::Gaussian ? rng_.normal() : rng_.sign();
  apply_sgd_update(W_, Wstar_, gamma_, config_.noise, sample_);
  ++step_;
  return sample_;
}

SimRun make_sim_run(const ScalingConfig& config, const StudentInit& init, std::uint64_t seed,
                    LabelNoise label_noise) {
  config.validate();
  const int p = config.width();
  Matrix teacher = build_symmetric_teacher(config.k, config.d, seed);
  Matrix W;
  if (init.kind == StudentInit::Kind::Gaussian) {
    W = init_student_gaussian(p, config.d, seed);
  } else if (init.A) {
    if (init.A->rows() != p || init.A->cols() != config.k) {
      std::ostringstream msg;
      msg << "combination matrix must be " << p << "x" << config.k << ", got " << init.A->rows()
          << "x" << init.A->cols();
      throw std::invalid_argument(msg.str());
    }
    W = combine_teacher(*init.A, teacher);
  } else {
    W = init_student_combination(teacher, p, seed).W0;
  }
  return SimRun(config, seed, std::move(W), std::move(teacher), label_noise);
}

std::vector<std::int64_t> hybrid_schedule(std::int64_t total_steps, int record_points) {
  if (total_steps < 0) throw std::invalid_argument("total steps must be non-negative");
  if (record_points < 2) throw std::invalid_argument("need at least 2 record points");
  std::vector<std::int64_t> steps{0, total_steps};
  const int linear = record_points / 2;
  const int geometric = record_points - linear;
  const double n = static_cast<double>(total_steps);
  for (int i = 1; i < linear; ++i) {
    steps.push_back(static_cast<std::int64_t>(std::llround(n * i / linear)));
  }
  if (total_steps > 0) {
    for (int i = 0; i < geometric; ++i) {
      const double frac = static_cast<double>(i) / (geometric - 1);
      steps.push_back(static_cast<std::int64_t>(std::llround(std::pow(n, frac))));
    }
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

SgdTrajectory run_sgd(SimRun& run, double t_end, int record_points, const SgdOptions& options) {
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  const std::int64_t start = run.step();
  const std::int64_t total = step_count(t_end, run.dt());
  std::vector<std::int64_t> schedule =
      options.record_steps.empty() ? hybrid_schedule(total, record_points) : options.record_steps;
  if (!std::is_sorted(schedule.begin(), schedule.end()) || schedule.front() < 0 ||
      schedule.back() > total) {
    throw std::invalid_argument("record steps must be sorted and lie in [0, total steps]");
  }

  SgdTrajectory traj;
  auto record = [&]() {
    if (!run.W().allFinite()) {
      std::ostringstream msg;
      msg << "SGD weights became non-finite at step " << run.step();
      throw IntegrationError(msg.str());
    }
    OverlapState state = run.overlaps();
    traj.steps.push_back(run.step());
    traj.times.push_back(run.time());
    traj.risks.push_back(population_risk(state, options.convention).total);
    if (options.record_states) traj.states.push_back(std::move(state));
  };

  for (std::int64_t target : schedule) {
    while (run.step() - start < target) run.sgd_step();
    record();
  }
  return traj;
}

SgdTrajectory run_sgd(const ScalingConfig& config, const StudentInit& init, std::uint64_t seed,
                      double t_end, int record_points, const SgdOptions& options) {
  SimRun run = make_sim_run(config, init, seed, options.label_noise);
  return run_sgd(run, t_end, record_points, options);
}

AsymptoticRisk asymptotic_risk(const std::vector<double>& risks, double window_fraction) {
  if (risks.empty()) throw std::invalid_argument("empty trajectory");
  if (!(window_fraction > 0.0 && window_fraction <= 0.5)) {
    throw std::invalid_argument("window fraction must lie in (0, 0.5]");
  }
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(window_fraction * static_cast<double>(risks.size()))));
  const auto first = risks.end() - static_cast<std::ptrdiff_t>(count);
  // Shifted by the first value so a constant window gives exactly (c, 0).
  const double shift = *first;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (auto it = first; it != risks.end(); ++it) {
    sum += *it - shift;
    sum_sq += (*it - shift) * (*it - shift);
  }
  const double n = static_cast<double>(count);
  const double mean = shift + sum / n;
  const double var = std::max(0.0, sum_sq / n - (sum / n) * (sum / n));
  AsymptoticRisk out{mean, std::sqrt(var), false};
  out.plateaued = out.std == 0.0 || (mean > 0.0 && out.std / mean < 0.5);
  return out;
}

}  // namespace odedyn
