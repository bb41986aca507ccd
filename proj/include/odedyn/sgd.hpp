#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "odedyn/overlap.hpp"
#include "odedyn/risk.hpp"
#include "odedyn/rng.hpp"

namespace odedyn {

enum class LabelNoise { Gaussian, Rademacher };

LabelNoise label_noise_from_string(std::string_view name);

/// How the student weights are initialized.
struct StudentInit {
  enum class Kind { Combination, Gaussian };
  Kind kind = Kind::Combination;
  /// Fixed combination matrix (p x k); sampled from the seed when empty.
  std::optional<Matrix> A;

  static StudentInit combination() { return {Kind::Combination, std::nullopt}; }
  static StudentInit combination(Matrix a) { return {Kind::Combination, std::move(a)}; }
  static StudentInit gaussian() { return {Kind::Gaussian, std::nullopt}; }
};

StudentInit::Kind student_init_from_string(std::string_view name);
std::string_view to_string(StudentInit::Kind kind);

/// Quantities drawn and computed during one SGD step.
struct StepSample {
  Vector x;
  double zeta = 0.0;
  Vector fields;          ///< lambda = W x / sqrt(d), before the update
  Vector teacher_fields;  ///< lambda* = W* x / sqrt(d)
  double error = 0.0;     ///< E, including the label noise
};

/// Rank-1 update w_j += gamma / (p sqrt(d)) sigma'(lambda_j) E x for a given
/// sample. Fills `sample.fields`, `teacher_fields` and `error`.
void apply_sgd_update(Matrix& W, const Matrix& Wstar, double gamma, double noise,
                      StepSample& sample);

/// State of one online-SGD run.
class SimRun {
 public:
  SimRun(const ScalingConfig& config, std::uint64_t seed, Matrix W, Matrix Wstar,
         LabelNoise label_noise = LabelNoise::Gaussian);

  const ScalingConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const Matrix& W() const { return W_; }
  const Matrix& Wstar() const { return Wstar_; }
  std::int64_t step() const { return step_; }
  double dt() const { return dt_; }
  double gamma() const { return gamma_; }
  double time() const { return static_cast<double>(step_) * dt_; }
  OverlapState overlaps() const { return overlap_from_weights(W_, Wstar_); }

  /// Draws a fresh (x, zeta), updates every student row and increments the
  /// step counter. Returns the sample that was used.
  const StepSample& sgd_step();

 private:
  ScalingConfig config_;
  std::uint64_t seed_;
  Matrix W_;
  Matrix Wstar_;
  LabelNoise label_noise_;
  Rng rng_;
  std::int64_t step_ = 0;
  double dt_;
  double gamma_;
  StepSample sample_;
};

/// Teacher and initial student for (config, init, seed).
SimRun make_sim_run(const ScalingConfig& config, const StudentInit& init, std::uint64_t seed,
                    LabelNoise label_noise = LabelNoise::Gaussian);

struct SgdTrajectory {
  std::vector<std::int64_t> steps;
  std::vector<double> times;
  std::vector<double> risks;
  std::vector<OverlapState> states;  ///< empty unless requested
};

struct SgdOptions {
  LabelNoise label_noise = LabelNoise::Gaussian;
  RiskConvention convention = RiskConvention::Half;
  bool record_states = false;
  /// Explicit record steps; replaces the default schedule when non-empty.
  std::vector<std::int64_t> record_steps;
};

/// Dense-early, sparse-late record schedule over [0, total_steps]: half the
/// points geometric, half linear, merged without duplicates.
std::vector<std::int64_t> hybrid_schedule(std::int64_t total_steps, int record_points);

/// Runs ceil(t_end / dt) steps and records the analytic risk of the overlaps.
SgdTrajectory run_sgd(const ScalingConfig& config, const StudentInit& init, std::uint64_t seed,
                      double t_end, int record_points = 400, const SgdOptions& options = {});

/// Same, continuing from an existing run.
SgdTrajectory run_sgd(SimRun& run, double t_end, int record_points = 400,
                      const SgdOptions& options = {});

struct AsymptoticRisk {
  double mean = 0.0;
  double std = 0.0;
  /// std / mean < 0.5 over the window.
  bool plateaued = false;
};

/// Mean and standard deviation of the last window_fraction of the points.
AsymptoticRisk asymptotic_risk(const std::vector<double>& risks, double window_fraction = 0.25);

}  // namespace odedyn
