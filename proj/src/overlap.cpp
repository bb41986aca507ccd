#include "odedyn/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>

namespace odedyn {

OverlapState::OverlapState(Matrix q, Matrix m, Matrix p)
    : Q(std::move(q)), M(std::move(m)), P(std::move(p)) {}

Matrix OverlapState::omega() const {
  const int np = p();
  const int nk = k();
  Matrix out(np + nk, np + nk);
  out.topLeftCorner(np, np) = Q;
  out.topRightCorner(np, nk) = M;
  out.bottomLeftCorner(nk, np) = M.transpose();
  out.bottomRightCorner(nk, nk) = P;
  return out;
}

double OverlapState::min_eigenvalue() const {
  const Matrix om = omega();
  const Matrix sym = 0.5 * (om + om.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

void OverlapState::validate(double psd_floor) const {
  if (Q.rows() != Q.cols() || P.rows() != P.cols() || M.rows() != Q.rows() ||
      M.cols() != P.rows() || Q.rows() == 0 || P.rows() == 0) {
    std::ostringstream msg;
    msg << "overlap state has inconsistent shapes: Q " << Q.rows() << "x" << Q.cols() << ", M "
        << M.rows() << "x" << M.cols() << ", P " << P.rows() << "x" << P.cols();
    throw InvalidState(msg.str());
  }
  if (!Q.allFinite() || !M.allFinite() || !P.allFinite()) {
    throw InvalidState("overlap state has non-finite entries");
  }
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidState("Q is not symmetric");
  }
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidState("P is not symmetric");
  }
  const double scale = std::max({1.0, Q.cwiseAbs().maxCoeff(), M.cwiseAbs().maxCoeff(),
                                 P.cwiseAbs().maxCoeff()});
  const double lambda_min = min_eigenvalue();
  if (lambda_min < -psd_floor * scale) {
    std::ostringstream msg;
    msg << "overlap matrix is not positive semidefinite (smallest eigenvalue " << lambda_min
        << ")";
    throw InvalidState(msg.str());
  }
}

std::string_view to_string(RegimeLabel label) {
  switch (label) {
    case RegimeLabel::PerfectLearning: return "perfect-learning";
    case RegimeLabel::Plateau: return "plateau";
    case RegimeLabel::BadLearning: return "bad-learning";
    case RegimeLabel::NoOde: return "no-ode";
  }
  return "unknown";
}

int ScalingConfig::width() const {
  const double raw = static_cast<double>(p0) * std::pow(static_cast<double>(d), kappa);
  return std::max(k, static_cast<int>(std::lround(raw)));
}

double ScalingConfig::learning_rate() const {
  return effective_gamma0() * std::pow(static_cast<double>(d), -delta);
}

void ScalingConfig::validate() const {
  if (d < 1) throw std::invalid_argument("d must be positive");
  if (p0 < 1) throw std::invalid_argument("p0 must be positive");
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (kappa < 0.0) throw std::invalid_argument("kappa must be non-negative");
  if (noise < 0.0) throw std::invalid_argument("noise variance must be non-negative");
  if (!std::isfinite(delta) || !std::isfinite(kappa) || !std::isfinite(gamma0)) {
    throw std::invalid_argument("scaling exponents must be finite");
  }
}

RegimeLabel classify_regime(double kappa, double delta) {
  constexpr double tol = 1e-12;
  const double s = kappa + delta;
  if (std::abs(s) <= tol) return RegimeLabel::Plateau;
  if (s > 0.0) return RegimeLabel::PerfectLearning;
  if (s <= -0.5 + tol) return RegimeLabel::NoOde;
  return RegimeLabel::BadLearning;
}

double time_step(const ScalingConfig& config) {
  const double d = static_cast<double>(config.d);
  const double s = config.exponent_sum();
  return std::max(std::pow(d, -(1.0 + s)), std::pow(d, -(1.0 + 2.0 * s)));
}

Vector sample_unit_ball(int dim, Rng& rng) {
  Vector v(dim);
  double norm2 = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm2 = v.squaredNorm();
  } while (norm2 == 0.0);
  const double radius = std::pow(rng.uniform_open(), 1.0 / static_cast<double>(dim));
  return v * (radius / std::sqrt(norm2));
}

Matrix build_symmetric_teacher(int k, int d, std::uint64_t seed) {
  if (k < 1 || d < 1) throw std::invalid_argument("teacher dimensions must be positive");
  if (k > d) throw std::invalid_argument("teacher rank exceeds dimension");

  Rng rng = make_stream(seed, StreamTag::kTeacher);
  const double root_d = std::sqrt(static_cast<double>(d));
  for (;;) {
    Matrix sample(k, d);
    for (int r = 0; r < k; ++r) sample.row(r) = root_d * sample_unit_ball(d, rng).transpose();

    Eigen::JacobiSVD<Matrix> svd(sample, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.singularValues().minCoeff() < 1e-8 * root_d) continue;
    // Polar factor: the orthonormal-row matrix closest to the sample.
    Matrix teacher = svd.matrixU() * svd.matrixV().transpose();
    return root_d * teacher;
  }
}

CombinationInit init_student_combination(const Matrix& teacher, int p, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("student width must be positive");
  Matrix A = sample_combination(p, static_cast<int>(teacher.rows()), seed);
  return {combine_teacher(A, teacher), std::move(A)};
}

Matrix sample_combination(int p, int k, std::uint64_t seed) {
  if (p < 1 || k < 1) throw std::invalid_argument("combination dimensions must be positive");
  Rng rng = make_stream(seed, StreamTag::kStudentInit);
  Matrix A(p, k);
  for (int j = 0; j < p; ++j) A.row(j) = sample_unit_ball(k, rng).transpose();
  return A;
}

Matrix teacher_copies(int p, int k) {
  if (p < 1 || k < 1) throw std::invalid_argument("combination dimensions must be positive");
  Matrix A = Matrix::Zero(p, k);
  for (int j = 0; j < p; ++j) A(j, j % k) = 1.0;
  return A;
}

OverlapState combination_overlaps(const Matrix& A) {
  const auto k = A.cols();
  return {A * A.transpose(), A, Matrix::Identity(k, k)};
}

Matrix combine_teacher(const Matrix& A, const Matrix& teacher) {
  if (A.cols() != teacher.rows()) {
    throw std::invalid_argument("combination matrix columns must match teacher rows");
  }
  return A * teacher;
}

Matrix init_student_gaussian(int p, int d, std::uint64_t seed) {
  if (p < 1 || d < 1) throw std::invalid_argument("student dimensions must be positive");
  Rng rng = make_stream(seed, StreamTag::kStudentInit);
  Matrix W(p, d);
  for (int j = 0; j < p; ++j) {
    for (int i = 0; i < d; ++i) W(j, i) = rng.normal();
  }
  return W;
}

OverlapState overlap_from_weights(const Matrix& W, const Matrix& Wstar) {
  if (W.cols() != Wstar.cols()) {
    std::ostringstream msg;
    msg << "dimension mismatch: student has d=" << W.cols() << ", teacher has d=" << Wstar.cols();
    throw InvalidState(msg.str());
  }
  if (W.rows() == 0 || Wstar.rows() == 0 || W.cols() == 0) {
    throw InvalidState("weight matrices must be non-empty");
  }
  const double inv_d = 1.0 / static_cast<double>(W.cols());
  Matrix Q = (W * W.transpose()) * inv_d;
  Matrix P = (Wstar * Wstar.transpose()) * inv_d;
  Matrix M = (W * Wstar.transpose()) * inv_d;
  Q = 0.5 * (Q + Q.transpose()).eval();
  P = 0.5 * (P + P.transpose()).eval();
  return {std::move(Q), std::move(M), std::move(P)};
}

}  // namespace odedyn
