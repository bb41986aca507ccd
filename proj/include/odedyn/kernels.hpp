#pragma once

// Closed-form Gaussian expectations for sigma(x) = erf(x / sqrt(2)) and a
// Monte Carlo oracle for them.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "odedyn/overlap.hpp"

namespace odedyn {

/// A radicand of a closed-form kernel fell below 1e-14, or an arcsine
/// argument left [-1, 1] by more than round-off.
class DegenerateCovariance : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class KernelKind {
  SigmaSigma,              ///< (1/2) E[sigma(a) sigma(b)] = arcsin(..) / pi, order 2
  DsigmaLambdaSigma,       ///< E[sigma'(a) b sigma(c)], order 3
  DsigmaDsigma,            ///< E[sigma'(a) sigma'(b)], order 2
  DsigmaDsigmaSigmaSigma,  ///< E[sigma'(a) sigma'(b) sigma(c) sigma(e)], order 4
};

std::string_view to_string(KernelKind kind);
KernelKind kernel_kind_from_string(std::string_view name);
int kernel_order(KernelKind kind);

struct FieldIndex {
  enum class Side { Student, Teacher };
  Side side;
  int index;

  static FieldIndex student(int j) { return {Side::Student, j}; }
  static FieldIndex teacher(int r) { return {Side::Teacher, r}; }
};

using CovarianceSelector = std::vector<FieldIndex>;

/// Covariance of 2 to 4 local fields.
struct KernelCovariance {
  Matrix entries;
  int order() const { return static_cast<int>(entries.rows()); }
};

/// Selects the covariance of the given fields out of the full overlap
/// matrix. Throws std::out_of_range for bad indices.
KernelCovariance assemble_covariance(const OverlapState& state, const CovarianceSelector& sel);

double i2_sigma_sigma(const Matrix& cov);
double i3_dsigma_lambda_sigma(const Matrix& cov);
double i4_dsigma_dsigma(const Matrix& cov);
double i4_dsigma_dsigma_sigma_sigma(const Matrix& cov);
double closed_form(KernelKind kind, const Matrix& cov);

inline double sigma(double x) { return std::erf(x * std::numbers::sqrt2 * 0.5); }
inline double sigma_prime(double x) {
  // sqrt(2 / pi) * exp(-x^2 / 2)
  return std::numbers::sqrt2 * std::numbers::inv_sqrtpi * std::exp(-0.5 * x * x);
}

namespace kernel {

constexpr double kRadicandFloor = 1e-14;
constexpr double kClampSlack = 1e-9;

/// arcsin with silent clamping inside [-1 - 1e-9, 1 + 1e-9].
double checked_asin(double x);

[[noreturn]] void throw_degenerate(const char* what, double value);

// Entry-wise forms. Index i of cij refers to the i-th selected field.

inline double sigma_sigma(double c11, double c12, double c22) {
  return checked_asin(c12 / std::sqrt((1.0 + c11) * (1.0 + c22))) * std::numbers::inv_pi;
}

inline double dsigma_lambda_sigma(double c11, double c12, double c13, double c23, double c33) {
  const double radicand = (1.0 + c11) * (1.0 + c33) - c13 * c13;
  if (!(radicand > kRadicandFloor)) throw_degenerate("i3 radicand", radicand);
  return 2.0 * std::numbers::inv_pi * (c23 * (1.0 + c11) - c12 * c13) /
         ((1.0 + c11) * std::sqrt(radicand));
}

inline double dsigma_dsigma(double c11, double c12, double c22) {
  const double radicand = 1.0 + c11 + c22 + c11 * c22 - c12 * c12;
  if (!(radicand > kRadicandFloor)) throw_degenerate("i4' radicand", radicand);
  return 2.0 * std::numbers::inv_pi / std::sqrt(radicand);
}

/// Minor of (I + C) on fields {1, 2}.
inline double pair_minor(double c11, double c12, double c22) {
  return (1.0 + c11) * (1.0 + c22) - c12 * c12;
}

/// Minor of (I + C) on fields {1, 2, a}, given the {1, 2} minor.
inline double triple_minor(double minor12, double c11, double c12, double c22, double c1a,
                           double c2a, double caa) {
  return minor12 * (1.0 + caa) - c2a * c2a * (1.0 + c11) - c1a * c1a * (1.0 + c22) +
         2.0 * c12 * c1a * c2a;
}

inline double cross_cofactor(double minor12, double c11, double c12, double c22, double c13,
                             double c14, double c23, double c24, double c34) {
  return minor12 * c34 - c23 * c24 * (1.0 + c11) - c13 * c14 * (1.0 + c22) + c12 * c13 * c24 +
         c12 * c14 * c23;
}

inline double dsigma_dsigma_sigma_sigma(double c11, double c12, double c13, double c14,
                                        double c22, double c23, double c24, double c33,
                                        double c34, double c44) {
  const double minor12 = pair_minor(c11, c12, c22);
  const double cofactor = cross_cofactor(minor12, c11, c12, c22, c13, c14, c23, c24, c34);
  const double minor123 = triple_minor(minor12, c11, c12, c22, c13, c23, c33);
  const double minor124 = triple_minor(minor12, c11, c12, c22, c14, c24, c44);
  if (!(minor12 > kRadicandFloor)) throw_degenerate("i4 pair minor", minor12);
  if (!(minor123 > kRadicandFloor)) throw_degenerate("i4 minor {1,2,3}", minor123);
  if (!(minor124 > kRadicandFloor)) throw_degenerate("i4 minor {1,2,4}", minor124);
  return 4.0 * std::numbers::inv_pi * std::numbers::inv_pi / std::sqrt(minor12) *
         checked_asin(cofactor / std::sqrt(minor123 * minor124));
}

}  // namespace kernel

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Sample mean and standard error of the kernel's integrand over n draws
/// from N(0, cov). The covariance is factored by Cholesky; semidefinite
/// inputs get their eigenvalues floored at 1e-12 first.
McEstimate mc_kernel_oracle(KernelKind kind, const KernelCovariance& cov, std::int64_t n,
                            std::uint64_t seed);

/// Cholesky factor with the eigenvalue-floor fallback used by the oracle.
Matrix regularized_cholesky(const Matrix& cov);

/// Random covariance of the given order: a Wishart-like correlation matrix
/// rescaled to a diagonal drawn uniformly from [diag_lo, diag_hi].
Matrix random_psd_covariance(int order, Rng& rng, double diag_lo = 0.1, double diag_hi = 3.0);

}  // namespace odedyn
