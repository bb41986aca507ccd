#include "odedyn/ode.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>
#include <string>

#include "odedyn/kernels.hpp"

namespace odedyn {

std::string_view to_string(OdeMode mode) {
  switch (mode) {
    case OdeMode::PlateauFull: return "plateau";
    case OdeMode::GreenLeading: return "green";
    case OdeMode::OrangeLeading: return "orange";
    case OdeMode::FiniteD: return "finite-d";
  }
  return "unknown";
}

OdeMode ode_mode_from_string(std::string_view name) {
  if (name == "plateau") return OdeMode::PlateauFull;
  if (name == "green") return OdeMode::GreenLeading;
  if (name == "orange") return OdeMode::OrangeLeading;
  if (name == "finite-d") return OdeMode::FiniteD;
  throw std::invalid_argument("unknown ODE mode: " + std::string(name));
}

OdeMode leading_mode(RegimeLabel regime) {
  switch (regime) {
    case RegimeLabel::Plateau: return OdeMode::PlateauFull;
    case RegimeLabel::PerfectLearning: return OdeMode::GreenLeading;
    case RegimeLabel::BadLearning: return OdeMode::OrangeLeading;
    case RegimeLabel::NoOde: break;
  }
  throw std::invalid_argument("no ODE description exists for kappa + delta <= -1/2");
}

namespace {

// Readout weight of every field in the error signal
// E = (1/k) sum_r sigma(lambda*_r) - (1/p) sum_l sigma(lambda_l).
Vector readout_weights(int p, int k) {
  Vector w(p + k);
  w.head(p).setConstant(-1.0 / p);
  w.tail(k).setConstant(1.0 / k);
  return w;
}

std::string field_name(int a, int p) {
  return a < p ? "student " + std::to_string(a) : "teacher " + std::to_string(a - p);
}

}  // namespace

LearningDrift learning_drift(const OverlapState& state) {
  const int p = state.p();
  const int k = state.k();
  const int n = p + k;
  const Matrix om = state.omega();
  const Vector w = readout_weights(p, k);

  // error_field(j, b) = E[E_j lambda_b]
  //   = sum_a w_a E[sigma'(lambda_j) lambda_b sigma(lambda_a)].
  // The three-point kernel is affine in Omega_ba and Omega_jb, so each row is
  // two matrix-vector products once the per-(j, a) denominators are known.
  Matrix error_field(p, n);
  Vector c(n);
  for (int j = 0; j < p; ++j) {
    const double one_jj = 1.0 + om(j, j);
    for (int a = 0; a < n; ++a) {
      const double radicand = one_jj * (1.0 + om(a, a)) - om(j, a) * om(j, a);
      if (!(radicand > kernel::kRadicandFloor)) {
        throw DegenerateCovariance("degenerate covariance: learning drift i3 radicand " +
                                   std::to_string(radicand) + " for student " +
                                   std::to_string(j) + " and " + field_name(a, p));
      }
      c[a] = w[a] * 2.0 * std::numbers::inv_pi / (one_jj * std::sqrt(radicand));
    }
    const double projection = c.dot(om.row(j));
    error_field.row(j) = (one_jj * (om * c)).transpose() - projection * om.row(j);
  }

  LearningDrift out;
  const Matrix student_part = error_field.leftCols(p);
  out.q = student_part + student_part.transpose();
  out.m = error_field.rightCols(k);
  return out;
}

Matrix noise_drift(const OverlapState& state, double noise) {
  if (noise < 0.0) throw std::invalid_argument("noise variance must be non-negative");
  const int p = state.p();
  const int k = state.k();
  const int n = p + k;
  const Matrix om = state.omega();
  const Vector w = readout_weights(p, k);
  const double four_over_pi2 = 4.0 * std::numbers::inv_pi * std::numbers::inv_pi;
  const double two_over_pi = 2.0 * std::numbers::inv_pi;

  Matrix out(p, p);
  Vector inv_root(n);
  for (int j = 0; j < p; ++j) {
    for (int l = j; l < p; ++l) {
      const double cjj = om(j, j);
      const double cll = om(l, l);
      const double cjl = om(j, l);
      const double minor12 = kernel::pair_minor(cjj, cjl, cll);
      if (!(minor12 > kernel::kRadicandFloor)) {
        throw DegenerateCovariance("degenerate covariance: noise drift pair minor for students " +
                                   std::to_string(j) + ", " + std::to_string(l));
      }
      for (int a = 0; a < n; ++a) {
        const double m3 = kernel::triple_minor(minor12, cjj, cjl, cll, om(j, a), om(l, a), om(a, a));
        if (!(m3 > kernel::kRadicandFloor)) {
          throw DegenerateCovariance(
              "degenerate covariance: noise drift minor for students " + std::to_string(j) +
              ", " + std::to_string(l) + " and " + field_name(a, p));
        }
        inv_root[a] = 1.0 / std::sqrt(m3);
      }

      double sum = 0.0;
      for (int a = 0; a < n; ++a) {
        const double va = om(j, a);
        const double ua = om(l, a);
        double row = 0.0;
        for (int b = a; b < n; ++b) {
          const double vb = om(j, b);
          const double ub = om(l, b);
          const double cofactor = minor12 * om(a, b) - (1.0 + cjj) * ua * ub -
                                  (1.0 + cll) * va * vb + cjl * (va * ub + ua * vb);
          const double term = w[b] * kernel::checked_asin(cofactor * inv_root[a] * inv_root[b]);
          row += (b == a) ? term : 2.0 * term;
        }
        sum += w[a] * row;
      }
      const double root = std::sqrt(minor12);
      const double value = four_over_pi2 / root * sum + noise * two_over_pi / root;
      out(j, l) = value;
      out(l, j) = value;
    }
  }
  return out;
}

DriftComponents drift_components(const OverlapState& state, double noise) {
  LearningDrift learning = learning_drift(state);
  return {std::move(learning.q), std::move(learning.m), noise_drift(state, noise)};
}

DriftCoefficients drift_coefficients(OdeMode mode, const ScalingConfig& config) {
  const double g = config.effective_gamma0() / static_cast<double>(config.p0);
  switch (mode) {
    case OdeMode::PlateauFull: return {g, g * g};
    case OdeMode::GreenLeading: return {g, 0.0};
    case OdeMode::OrangeLeading: return {0.0, g * g};
    case OdeMode::FiniteD: {
      // gamma / (p d dt) and gamma^2 / (p^2 d dt) with p = p0 d^kappa.
      const double d = static_cast<double>(config.d);
      const double s = config.exponent_sum();
      const double dt = time_step(config);
      return {g * std::pow(d, -(1.0 + s)) / dt, g * g * std::pow(d, -(1.0 + 2.0 * s)) / dt};
    }
  }
  throw std::invalid_argument("unknown ODE mode");
}

OverlapFlow rhs(const OverlapState& state, OdeMode mode, const ScalingConfig& config,
                bool allow_mismatch) {
  if (!allow_mismatch) {
    const RegimeLabel regime = classify_regime(config);
    const bool ok = mode == OdeMode::FiniteD ? regime != RegimeLabel::NoOde
                                             : regime != RegimeLabel::NoOde &&
                                                   leading_mode(regime) == mode;
    if (!ok) {
      std::ostringstream msg;
      msg << "ODE mode '" << to_string(mode) << "' does not describe the "
          << to_string(regime) << " regime (kappa + delta = " << config.exponent_sum() << ")";
      throw std::invalid_argument(msg.str());
    }
  }
  const DriftCoefficients coef = drift_coefficients(mode, config);
  OverlapFlow out{Matrix::Zero(state.p(), state.p()), Matrix::Zero(state.p(), state.k())};
  if (coef.learning != 0.0) {
    const LearningDrift learning = learning_drift(state);
    out.Q += coef.learning * learning.q;
    out.M += coef.learning * learning.m;
  }
  if (coef.noise != 0.0) out.Q += coef.noise * noise_drift(state, config.noise);
  return out;
}

std::int64_t step_count(double t_end, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (!(t_end >= 0.0)) throw std::invalid_argument("end time must be non-negative");
  const double x = t_end / dt;
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-9 * std::max(1.0, x)) return static_cast<std::int64_t>(r);
  return static_cast<std::int64_t>(std::ceil(x));
}

OdeTrajectory integrate(const OverlapState& state0, OdeMode mode, const ScalingConfig& config,
                        double t_end, double dt, int record_stride,
                        const IntegrateOptions& options) {
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (record_stride < 1) throw std::invalid_argument("record stride must be at least 1");
  state0.validate();
  // Fail on a mode/regime mismatch before any work.
  (void)rhs(state0, mode, config, options.allow_mismatch);

  const Matrix P = state0.P;
  const std::int64_t n = step_count(t_end, dt);
  OdeTrajectory traj;

  auto field = [&](double, const OverlapFlow& y) {
    return rhs(OverlapState(y.Q, y.M, P), mode, config, true);
  };
  auto observe = [&](std::int64_t step, double t, const OverlapFlow& y) {
    if (!y.Q.allFinite() || !y.M.allFinite()) {
      std::ostringstream msg;
      msg << "integration blew up at t = " << t << " (step " << step << "): non-finite overlaps";
      throw IntegrationError(msg.str());
    }
    OverlapState s(y.Q, y.M, P);
    const double scale = std::max({1.0, y.Q.cwiseAbs().maxCoeff(), y.M.cwiseAbs().maxCoeff(),
                                   P.cwiseAbs().maxCoeff()});
    const double lambda_min = s.min_eigenvalue();
    if (lambda_min < -options.psd_floor * scale) {
      std::ostringstream msg;
      msg << "state left the PSD cone at t = " << t << " (step " << step
          << "): smallest eigenvalue " << lambda_min;
      throw IntegrationError(msg.str());
    }
    if (step % record_stride != 0 && step != n) return;
    const double risk = population_risk_unchecked(s, options.convention).total;
    if (!std::isfinite(risk)) {
      std::ostringstream msg;
      msg << "risk became non-finite at t = " << t << " (step " << step << ")";
      throw IntegrationError(msg.str());
    }
    traj.times.push_back(t);
    traj.risks.push_back(risk);
    if (options.record_states) traj.states.push_back(std::move(s));
  };
  rk4_integrate(OverlapFlow{state0.Q, state0.M}, static_cast<double>(n) * dt, dt, field, observe);
  return traj;
}

GradientFlowReport gradient_flow_consistency_check(const OverlapState& state, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  state.validate();
  const LearningDrift drift = learning_drift(state);
  const OverlapState forward(state.Q + epsilon * drift.q, state.M + epsilon * drift.m, state.P);
  const OverlapState backward(state.Q - epsilon * drift.q, state.M - epsilon * drift.m, state.P);
  const double rate =
      (population_risk_unchecked(forward).total - population_risk_unchecked(backward).total) /
      (2.0 * epsilon);
  return {rate, rate <= 1e-10};
}

StepHalvingReport step_halving_check(const OverlapState& state0, OdeMode mode,
                                     const ScalingConfig& config, double t_end, double dt) {
  auto terminal = [&](double h) {
    const int stride = static_cast<int>(std::min<std::int64_t>(step_count(t_end, h), 1 << 30));
    return integrate(state0, mode, config, t_end, h, stride).risks.back();
  };
  StepHalvingReport out;
  out.risk_dt = terminal(dt);
  out.risk_half = terminal(0.5 * dt);
  out.risk_quarter = terminal(0.25 * dt);
  out.ratio = (out.risk_dt - out.risk_half) / (out.risk_half - out.risk_quarter);
  return out;
}

}  // namespace odedyn
