#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "odedyn/overlap.hpp"
#include "odedyn/risk.hpp"

namespace odedyn {

/// Which terms of the overlap drift are integrated, and in which time unit.
enum class OdeMode {
  PlateauFull,    ///< learning + noise, time t = nu / d
  GreenLeading,   ///< learning only, time t = nu d^-(1+kappa+delta)
  OrangeLeading,  ///< noise only with dM/dt = 0, time t = nu d^-(1+2(kappa+delta))
  FiniteD,        ///< both terms with their explicit powers of d
};

std::string_view to_string(OdeMode mode);
OdeMode ode_mode_from_string(std::string_view name);

/// Leading-order mode of a regime. Throws for NoOde.
OdeMode leading_mode(RegimeLabel regime);

struct LearningDrift {
  Matrix q;  ///< E[E_j lambda_l + E_l lambda_j], p x p
  Matrix m;  ///< E[E_j lambda*_r], p x k
};

struct DriftComponents {
  Matrix learning_q;
  Matrix learning_m;
  Matrix noise_q;  ///< E[E_j E_l] including the label-noise term
};

LearningDrift learning_drift(const OverlapState& state);
Matrix noise_drift(const OverlapState& state, double noise);
DriftComponents drift_components(const OverlapState& state, double noise);

/// Multipliers applied to the learning and noise terms by a mode.
struct DriftCoefficients {
  double learning = 0.0;
  double noise = 0.0;
};

DriftCoefficients drift_coefficients(OdeMode mode, const ScalingConfig& config);

/// Time derivative of (Q, M). Also the state type the integrator steps.
struct OverlapFlow {
  Matrix Q;
  Matrix M;

  OverlapFlow& operator+=(const OverlapFlow& o) {
    Q += o.Q;
    M += o.M;
    return *this;
  }
  friend OverlapFlow operator+(OverlapFlow a, const OverlapFlow& b) { return a += b; }
  friend OverlapFlow operator*(double s, const OverlapFlow& a) { return {s * a.Q, s * a.M}; }
};

/// Drift of the overlaps. Throws std::invalid_argument when the mode does
/// not belong to the configuration's regime, unless allow_mismatch is set.
OverlapFlow rhs(const OverlapState& state, OdeMode mode, const ScalingConfig& config,
                bool allow_mismatch = false);

/// Aborted integration: non-finite state, risk or PSD violation.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classical fourth-order Runge-Kutta step for any type with `+` and
/// scalar `*`. f(t, y) returns dy/dt.
template <class Y, class F>
Y rk4_step(const Y& y, double t, double h, F&& f) {
  const Y k1 = f(t, y);
  const Y k2 = f(t + 0.5 * h, y + (0.5 * h) * k1);
  const Y k3 = f(t + 0.5 * h, y + (0.5 * h) * k2);
  const Y k4 = f(t + h, y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Number of fixed steps of size dt needed to reach t_end.
std::int64_t step_count(double t_end, double dt);

/// Integrates dy/dt = f(t, y) with fixed-step RK4. observe(step, t, y) is
/// called for step 0 and after every step.
template <class Y, class F, class Observer>
Y rk4_integrate(Y y, double t_end, double dt, F&& f, Observer&& observe) {
  const std::int64_t n = step_count(t_end, dt);
  observe(std::int64_t{0}, 0.0, y);
  for (std::int64_t i = 0; i < n; ++i) {
    y = rk4_step(y, static_cast<double>(i) * dt, dt, f);
    observe(i + 1, static_cast<double>(i + 1) * dt, y);
  }
  return y;
}

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<double> risks;
  std::vector<OverlapState> states;  ///< empty unless snapshots were requested
};

struct IntegrateOptions {
  bool record_states = false;
  bool allow_mismatch = false;
  RiskConvention convention = RiskConvention::Half;
  /// Abort when the smallest eigenvalue of Omega drops below -psd_floor * max(1, max|Omega|).
  double psd_floor = 1e-6;
};

/// Fixed-step RK4 from state0 over [0, t_end] in the mode's time unit,
/// recording risk every record_stride steps and at t_end.
OdeTrajectory integrate(const OverlapState& state0, OdeMode mode, const ScalingConfig& config,
                        double t_end, double dt, int record_stride,
                        const IntegrateOptions& options = {});

struct GradientFlowReport {
  double risk_rate = 0.0;  ///< dR/dt along the learning drift
  bool non_increasing = false;
};

/// Central-difference derivative of the risk along (learning_q, learning_m).
GradientFlowReport gradient_flow_consistency_check(const OverlapState& state, double epsilon = 1e-6);

/// Terminal risks at dt, dt/2 and dt/4, and the ratio of their successive
/// differences (16 for a fourth-order method).
struct StepHalvingReport {
  double risk_dt = 0.0;
  double risk_half = 0.0;
  double risk_quarter = 0.0;
  double ratio = 0.0;
};

StepHalvingReport step_halving_check(const OverlapState& state0, OdeMode mode,
                                     const ScalingConfig& config, double t_end, double dt);

}  // namespace odedyn
