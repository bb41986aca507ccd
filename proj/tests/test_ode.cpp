#include <doctest.h>

#include <cmath>
#include <numbers>

#include "odedyn/ode.hpp"
#include "support.hpp"

using namespace odedyn;
using testing::max_abs_diff;

namespace {

OverlapState small_state() {
  return OverlapState((Matrix(2, 2) << 0.6, 0.1, 0.1, 0.4).finished(),
                      (Matrix(2, 1) << 0.3, -0.2).finished(), Matrix::Ones(1, 1));
}

ScalingConfig plateau_config(double noise = 0.0) {
  ScalingConfig c;
  c.noise = noise;
  return c;
}

// Equal-m state: every student has the same overlap with every teacher.
OverlapState unspecialized_state(int p, int k, double m, double q_diag, double q_off) {
  Matrix Q = Matrix::Constant(p, p, q_off);
  Q.diagonal().setConstant(q_diag);
  return OverlapState(Q, Matrix::Constant(p, k, m), Matrix::Identity(k, k));
}

}  // namespace

TEST_CASE("fast drift matches the kernel-by-kernel sum") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const OverlapState s = testing::random_state(2 + seed % 4, 1 + seed % 3, seed, 0.8);
    const DriftComponents fast = drift_components(s, 1e-3);
    const DriftComponents slow = testing::naive_drift(s, 1e-3);
    CHECK(max_abs_diff(fast.learning_q, slow.learning_q) < 1e-12);
    CHECK(max_abs_diff(fast.learning_m, slow.learning_m) < 1e-12);
    CHECK(max_abs_diff(fast.noise_q, slow.noise_q) < 1e-12);
    const LearningDrift l = learning_drift(s);
    CHECK(max_abs_diff(l.q, fast.learning_q) == 0.0);
    CHECK(max_abs_diff(noise_drift(s, 1e-3), fast.noise_q) == 0.0);
  }
}

TEST_CASE("drift matches Gauss-Hermite quadrature on a small state") {
  const DriftComponents d = drift_components(small_state(), 1e-3);
  const Matrix lq = (Matrix(2, 2) << -0.05222513653702061, -0.19919392345467515,
                     -0.19919392345467515, -0.2755104191670038).finished();
  const Matrix lm = (Matrix(2, 1) << 0.34707759329990584, 0.3391530465291893).finished();
  const Matrix nq = (Matrix(2, 2) << 0.18996321203023275, 0.16754949859672946,
                     0.16754949859672946, 0.16939672244553963).finished();
  CHECK(max_abs_diff(d.learning_q, lq) < 1e-10);
  CHECK(max_abs_diff(d.learning_m, lm) < 1e-10);
  CHECK(max_abs_diff(d.noise_q, nq) < 1e-10);
}

TEST_CASE("scalar drift at the fixed point") {
  const OverlapState s(Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1));
  CHECK(std::abs(noise_drift(s, 1e-3)(0, 0) - 1e-3 * (2.0 / std::numbers::pi) / std::sqrt(3.0)) < 1e-15);
  CHECK(std::abs(noise_drift(s, 0.0)(0, 0)) < 1e-12);
  const OverlapState orth(Matrix::Ones(1, 1), Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  // Independent fields: E[sigma'(l)] E[l* sigma(l*)] = (1 / sqrt(pi))^2.
  CHECK(std::abs(learning_drift(orth).m(0, 0) - 1.0 / std::numbers::pi) < 1e-12);
}

TEST_CASE("noise drift is affine in the label-noise variance") {
  const OverlapState s = testing::random_state(4, 2, 3);
  const Matrix base = noise_drift(s, 0.01);
  const Matrix shifted = noise_drift(s, 0.26);
  for (int j = 0; j < 4; ++j)
    for (int l = 0; l < 4; ++l) {
      const double kernel = i4_dsigma_dsigma(
          assemble_covariance(s, {FieldIndex::student(j), FieldIndex::student(l)}).entries);
      CHECK(std::abs(shifted(j, l) - base(j, l) - 0.25 * kernel) < 1e-14);
    }
}

TEST_CASE("global minimum is a fixed point in every mode") {
  const OverlapState s = combination_overlaps(Matrix::Identity(4, 4));
  ScalingConfig c;
  c.p0 = 4;
  c.k = 4;
  c.d = 100;
  struct Case {
    double kappa;
    double delta;
    OdeMode mode;
  };
  for (const Case& cs : {Case{0, 0, OdeMode::PlateauFull}, Case{0, 0.5, OdeMode::GreenLeading},
                         Case{0, -0.25, OdeMode::OrangeLeading}, Case{0, 0.5, OdeMode::FiniteD}}) {
    c.kappa = cs.kappa;
    c.delta = cs.delta;
    const OverlapFlow f = rhs(s, cs.mode, c);
    CHECK(f.Q.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(f.M.cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("modes are tied to their regimes") {
  const OverlapState s = combination_overlaps(sample_combination(8, 4, 1));
  ScalingConfig c;
  CHECK_THROWS_AS(rhs(s, OdeMode::GreenLeading, c), std::invalid_argument);
  CHECK_NOTHROW(rhs(s, OdeMode::GreenLeading, c, true));
  c.delta = -0.6;
  CHECK_THROWS_AS(rhs(s, OdeMode::FiniteD, c), std::invalid_argument);
  CHECK(leading_mode(RegimeLabel::PerfectLearning) == OdeMode::GreenLeading);
  CHECK(leading_mode(RegimeLabel::BadLearning) == OdeMode::OrangeLeading);
  CHECK_THROWS(leading_mode(RegimeLabel::NoOde));
  for (OdeMode m : {OdeMode::PlateauFull, OdeMode::GreenLeading, OdeMode::OrangeLeading, OdeMode::FiniteD})
    CHECK(ode_mode_from_string(to_string(m)) == m);
}

TEST_CASE("finite-d coefficients approach the leading mode") {
  ScalingConfig c;
  c.d = 10000;
  c.delta = 0.5;
  const DriftCoefficients lead = drift_coefficients(OdeMode::GreenLeading, c);
  const DriftCoefficients fin = drift_coefficients(OdeMode::FiniteD, c);
  CHECK(fin.learning == doctest::Approx(lead.learning).epsilon(1e-12));
  CHECK(fin.noise == doctest::Approx(1e-2));
  c.delta = -0.25;
  const DriftCoefficients orange = drift_coefficients(OdeMode::OrangeLeading, c);
  const DriftCoefficients fin2 = drift_coefficients(OdeMode::FiniteD, c);
  CHECK(fin2.noise == doctest::Approx(orange.noise).epsilon(1e-12));
  CHECK(fin2.learning == doctest::Approx(0.1));
}

TEST_CASE("equal-m structure is preserved by the drift") {
  const OverlapState s = unspecialized_state(6, 3, 0.2, 0.5, 0.15);
  const OverlapFlow f = rhs(s, OdeMode::PlateauFull, plateau_config(1e-3));
  CHECK(std::abs(f.M.maxCoeff() - f.M.minCoeff()) < 1e-10);
  const Vector diag = f.Q.diagonal();
  CHECK(std::abs(diag.maxCoeff() - diag.minCoeff()) < 1e-10);
  Matrix off = f.Q;
  off.diagonal().setConstant(off(0, 1));
  CHECK(std::abs(off.maxCoeff() - off.minCoeff()) < 1e-10);
}

TEST_CASE("RK4 reproduces the exponential") {
  const double y = rk4_integrate(
      1.0, 1.0, 1e-3, [](double, double v) { return -v; }, [](std::int64_t, double, double) {});
  CHECK(std::abs(y - std::exp(-1.0)) < 1e-9);
  CHECK(step_count(1.0, 1e-3) == 1000);
  CHECK(step_count(1.0, 0.3) == 4);
  CHECK_THROWS(step_count(1.0, 0.0));
}

TEST_CASE("scalar plateau ODE matches an independent high-order solution") {
  ScalingConfig c;
  c.p0 = 1;
  c.k = 1;
  c.noise = 1e-3;
  const OverlapState s0(Matrix::Constant(1, 1, 0.25), Matrix::Constant(1, 1, 0.3), Matrix::Ones(1, 1));
  IntegrateOptions opt;
  opt.record_states = true;
  opt.convention = RiskConvention::Plain;
  const OdeTrajectory tr = integrate(s0, OdeMode::PlateauFull, c, 1.0, 1e-3, 1000, opt);
  CHECK(tr.times.back() == doctest::Approx(1.0));
  CHECK(std::abs(tr.states.back().Q(0, 0) - 0.35716839750297225) < 1e-9);
  CHECK(std::abs(tr.states.back().M(0, 0) - 0.49868878741053146) < 1e-9);
  CHECK(std::abs(tr.risks.back() - 0.05566605438695172) < 1e-9);
}

TEST_CASE("step halving shows fourth-order convergence") {
  const OverlapState s0 = combination_overlaps(sample_combination(4, 2, 3));
  ScalingConfig c;
  c.p0 = 4;
  c.k = 2;
  c.noise = 1e-3;
  const StepHalvingReport r = step_halving_check(s0, OdeMode::PlateauFull, c, 2.0, 0.2);
  CHECK(r.ratio >= 12.0);
  CHECK(r.ratio <= 20.0);
}

TEST_CASE("risk is non-increasing without label noise") {
  const OverlapState s0 = combination_overlaps(sample_combination(4, 2, 5));
  ScalingConfig c;
  c.p0 = 4;
  c.k = 2;
  const OdeTrajectory plateau = integrate(s0, OdeMode::PlateauFull, c, 50.0, 0.05, 1);
  for (std::size_t i = 1; i < plateau.risks.size(); ++i)
    CHECK(plateau.risks[i] <= plateau.risks[i - 1] + 1e-9);
  c.delta = 0.5;
  c.noise = 1e-2;
  const OdeTrajectory green = integrate(s0, OdeMode::GreenLeading, c, 50.0, 0.05, 1);
  for (std::size_t i = 1; i < green.risks.size(); ++i)
    CHECK(green.risks[i] <= green.risks[i - 1] + 1e-9);
  CHECK(green.risks.back() < 0.1 * green.risks.front());
}

TEST_CASE("permutation symmetry of the initial state persists") {
  // Students 0 and 1 start identical; the swap 0 <-> 1 is a symmetry.
  Matrix A = sample_combination(4, 2, 8);
  A.row(1) = A.row(0);
  ScalingConfig c;
  c.p0 = 4;
  c.k = 2;
  c.noise = 1e-3;
  IntegrateOptions opt;
  opt.record_states = true;
  const OdeTrajectory tr = integrate(combination_overlaps(A), OdeMode::PlateauFull, c, 100.0, 0.05, 100, opt);
  Eigen::PermutationMatrix<Eigen::Dynamic> swap(4);
  swap.indices() << 1, 0, 2, 3;
  for (const OverlapState& s : tr.states) {
    CHECK(max_abs_diff(swap * s.Q * swap.transpose(), s.Q) <= 1e-8);
    CHECK(max_abs_diff(swap * s.M, s.M) <= 1e-8);
  }
}

TEST_CASE("orange mode keeps M bitwise constant") {
  const OverlapState s0 = combination_overlaps(sample_combination(8, 4, 2));
  ScalingConfig c;
  c.delta = -0.375;
  c.noise = 1e-3;
  IntegrateOptions opt;
  opt.record_states = true;
  const OdeTrajectory tr = integrate(s0, OdeMode::OrangeLeading, c, 5.0, 0.01, 1, opt);
  CHECK(tr.states.size() == 501);
  bool constant = true;
  for (const OverlapState& s : tr.states) constant = constant && (s.M.array() == s0.M.array()).all();
  CHECK(constant);
  CHECK(max_abs_diff(tr.states.back().Q, s0.Q) > 1e-3);
}

TEST_CASE("risk decreases along the learning drift") {
  const OverlapState fixed = combination_overlaps(Matrix::Identity(3, 3));
  CHECK(std::abs(gradient_flow_consistency_check(fixed).risk_rate) < 1e-12);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const GradientFlowReport r = gradient_flow_consistency_check(testing::random_state(3, 2, seed));
    CHECK(r.risk_rate <= 1e-8);
  }
  const GradientFlowReport small = gradient_flow_consistency_check(small_state());
  CHECK(std::abs(small.risk_rate - 0.5 * (-0.15817214367025434)) < 1e-7);
  const GradientFlowReport plateau =
      gradient_flow_consistency_check(combination_overlaps(Matrix::Constant(8, 4, 0.25)));
  CHECK(plateau.risk_rate <= 0.0);
}

TEST_CASE("unspecialized plateau is a fixed point of the noiseless dynamics") {
  // Symmetric rows: the trajectory stays in the equal-m subspace and settles.
  ScalingConfig c;
  const OdeTrajectory tr =
      integrate(combination_overlaps(Matrix::Constant(8, 4, 0.25)), OdeMode::PlateauFull, c, 100.0, 0.05, 200);
  CHECK(std::abs(tr.risks.back() - tr.risks[tr.risks.size() / 2]) < 1e-9);
  CHECK(tr.risks.back() > 1e-3);
}

TEST_CASE("integration aborts on a blow-up") {
  const OverlapState s0 = combination_overlaps(sample_combination(4, 2, 1));
  ScalingConfig c;
  c.p0 = 4;
  c.k = 2;
  IntegrateOptions strict;
  strict.psd_floor = -0.5;  // demands an eigenvalue margin the rank-deficient state lacks
  CHECK_THROWS_AS(integrate(s0, OdeMode::PlateauFull, c, 1.0, 0.1, 1, strict), IntegrationError);
  CHECK_THROWS_AS(integrate(s0, OdeMode::GreenLeading, ScalingConfig{}, 1.0, 0.1, 1), std::invalid_argument);
}
