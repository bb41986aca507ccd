#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "odedyn/rng.hpp"

namespace odedyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when a matrix argument fails a structural precondition
/// (shape, symmetry, positive semidefiniteness).
class InvalidState : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Macroscopic state: student-student overlaps Q (p x p), student-teacher
/// overlaps M (p x k) and teacher-teacher overlaps P (k x k).
struct OverlapState {
  Matrix Q;
  Matrix M;
  Matrix P;

  OverlapState() = default;
  OverlapState(Matrix q, Matrix m, Matrix p);

  int p() const { return static_cast<int>(Q.rows()); }
  int k() const { return static_cast<int>(P.rows()); }

  /// Full (p+k) x (p+k) block matrix [[Q, M], [M^T, P]].
  Matrix omega() const;

  /// Smallest eigenvalue of the symmetrized omega().
  double min_eigenvalue() const;

  /// Throws InvalidState on shape mismatch, asymmetry beyond 1e-12 or an
  /// eigenvalue below -psd_floor * max(1, max|omega|).
  void validate(double psd_floor = 1e-9) const;
};

enum class RegimeLabel { PerfectLearning, Plateau, BadLearning, NoOde };

std::string_view to_string(RegimeLabel label);

/// Scaling of width and learning rate with the input dimension:
/// p = round(p0 d^kappa), gamma = gamma0 d^-delta.
struct ScalingConfig {
  int d = 1000;
  int p0 = 8;
  int k = 4;
  double kappa = 0.0;
  double delta = 0.0;
  /// Non-positive means "use p0".
  double gamma0 = 0.0;
  /// Label-noise variance.
  double noise = 0.0;

  double effective_gamma0() const { return gamma0 > 0.0 ? gamma0 : static_cast<double>(p0); }
  /// Width, clamped to >= k.
  int width() const;
  double learning_rate() const;
  /// kappa + delta.
  double exponent_sum() const { return kappa + delta; }

  void validate() const;
};

RegimeLabel classify_regime(double kappa, double delta);
inline RegimeLabel classify_regime(const ScalingConfig& config) {
  return classify_regime(config.kappa, config.delta);
}

/// dt = max(d^-(1+kappa+delta), d^-(1+2(kappa+delta))).
double time_step(const ScalingConfig& config);

/// k x d teacher with orthogonal rows of norm sqrt(d), so that P = I.
Matrix build_symmetric_teacher(int k, int d, std::uint64_t seed);

struct CombinationInit {
  Matrix W0;  ///< p x d, equal to A * teacher
  Matrix A;   ///< p x k, rows uniform in the unit ball
};

/// Rows of A uniform in the k-dimensional unit ball, W0 = A * teacher.
CombinationInit init_student_combination(const Matrix& teacher, int p, std::uint64_t seed);

/// The A drawn by init_student_combination for the same (p, seed).
Matrix sample_combination(int p, int k, std::uint64_t seed);

/// Row j is the unit vector e_(j mod k): every student copies a teacher unit.
/// A global minimum of the noiseless risk when k divides p.
Matrix teacher_copies(int p, int k);

/// Overlaps of W = A * teacher for an orthonormal teacher (P = I):
/// Q = A A^T, M = A.
OverlapState combination_overlaps(const Matrix& A);

/// W0 = A * teacher for a caller-supplied A.
Matrix combine_teacher(const Matrix& A, const Matrix& teacher);

/// p x d matrix of i.i.d. standard normals.
Matrix init_student_gaussian(int p, int d, std::uint64_t seed);

OverlapState overlap_from_weights(const Matrix& W, const Matrix& Wstar);

/// Uniform sample in the unit ball of the given dimension.
Vector sample_unit_ball(int dim, Rng& rng);

}  // namespace odedyn
