#include "odedyn/kernels.hpp"

#include <algorithm>
#include <sstream>
#include <string>

namespace odedyn {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::SigmaSigma: return "i2";
    case KernelKind::DsigmaLambdaSigma: return "i3";
    case KernelKind::DsigmaDsigma: return "i4p";
    case KernelKind::DsigmaDsigmaSigmaSigma: return "i4";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(std::string_view name) {
  if (name == "i2") return KernelKind::SigmaSigma;
  if (name == "i3") return KernelKind::DsigmaLambdaSigma;
  if (name == "i4p" || name == "i4'") return KernelKind::DsigmaDsigma;
  if (name == "i4") return KernelKind::DsigmaDsigmaSigmaSigma;
  throw std::invalid_argument("unknown kernel kind: " + std::string(name));
}

int kernel_order(KernelKind kind) {
  switch (kind) {
    case KernelKind::SigmaSigma:
    case KernelKind::DsigmaDsigma: return 2;
    case KernelKind::DsigmaLambdaSigma: return 3;
    case KernelKind::DsigmaDsigmaSigmaSigma: return 4;
  }
  return 0;
}

namespace kernel {

void throw_degenerate(const char* what, double value) {
  std::ostringstream msg;
  msg << "degenerate covariance: " << what << " = " << value;
  throw DegenerateCovariance(msg.str());
}

double checked_asin(double x) {
  if (!(std::abs(x) <= 1.0 + kClampSlack)) throw_degenerate("arcsine argument", x);
  return std::asin(std::clamp(x, -1.0, 1.0));
}

}  // namespace kernel

KernelCovariance assemble_covariance(const OverlapState& state, const CovarianceSelector& sel) {
  const int n = static_cast<int>(sel.size());
  if (n < 2 || n > 4) throw std::invalid_argument("covariance selector must have 2 to 4 fields");
  for (const auto& f : sel) {
    const int limit = f.side == FieldIndex::Side::Student ? state.p() : state.k();
    if (f.index < 0 || f.index >= limit) {
      std::ostringstream msg;
      msg << (f.side == FieldIndex::Side::Student ? "student" : "teacher") << " index "
          << f.index << " out of range [0, " << limit << ")";
      throw std::out_of_range(msg.str());
    }
  }
  auto entry = [&](const FieldIndex& a, const FieldIndex& b) {
    using Side = FieldIndex::Side;
    if (a.side == Side::Student && b.side == Side::Student) return state.Q(a.index, b.index);
    if (a.side == Side::Student) return state.M(a.index, b.index);
    if (b.side == Side::Student) return state.M(b.index, a.index);
    return state.P(a.index, b.index);
  };
  KernelCovariance out{Matrix(n, n)};
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) out.entries(a, b) = entry(sel[a], sel[b]);
  }
  return out;
}

namespace {

void require_shape(const Matrix& cov, int order, const char* name) {
  if (cov.rows() != order || cov.cols() != order) {
    std::ostringstream msg;
    msg << name << " expects a " << order << "x" << order << " covariance, got " << cov.rows()
        << "x" << cov.cols();
    throw std::invalid_argument(msg.str());
  }
  if (!cov.allFinite()) throw std::invalid_argument(std::string(name) + ": non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument(std::string(name) + ": covariance is not symmetric");
  }
}

}  // namespace

double i2_sigma_sigma(const Matrix& cov) {
  require_shape(cov, 2, "i2");
  return kernel::sigma_sigma(cov(0, 0), cov(0, 1), cov(1, 1));
}

double i3_dsigma_lambda_sigma(const Matrix& cov) {
  require_shape(cov, 3, "i3");
  return kernel::dsigma_lambda_sigma(cov(0, 0), cov(0, 1), cov(0, 2), cov(1, 2), cov(2, 2));
}

double i4_dsigma_dsigma(const Matrix& cov) {
  require_shape(cov, 2, "i4'");
  return kernel::dsigma_dsigma(cov(0, 0), cov(0, 1), cov(1, 1));
}

double i4_dsigma_dsigma_sigma_sigma(const Matrix& cov) {
  require_shape(cov, 4, "i4");
  return kernel::dsigma_dsigma_sigma_sigma(cov(0, 0), cov(0, 1), cov(0, 2), cov(0, 3),
                                           cov(1, 1), cov(1, 2), cov(1, 3), cov(2, 2),
                                           cov(2, 3), cov(3, 3));
}

double closed_form(KernelKind kind, const Matrix& cov) {
  switch (kind) {
    case KernelKind::SigmaSigma: return i2_sigma_sigma(cov);
    case KernelKind::DsigmaLambdaSigma: return i3_dsigma_lambda_sigma(cov);
    case KernelKind::DsigmaDsigma: return i4_dsigma_dsigma(cov);
    case KernelKind::DsigmaDsigmaSigmaSigma: return i4_dsigma_dsigma_sigma_sigma(cov);
  }
  throw std::invalid_argument("unknown kernel kind");
}

Matrix regularized_cholesky(const Matrix& cov) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (cov + cov.transpose()));
  Vector values = eig.eigenvalues().cwiseMax(1e-12);
  const Matrix floored = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::LLT<Matrix> retry(0.5 * (floored + floored.transpose()));
  if (retry.info() != Eigen::Success) {
    throw DegenerateCovariance("Cholesky factorization failed after eigenvalue flooring");
  }
  return retry.matrixL();
}

McEstimate mc_kernel_oracle(KernelKind kind, const KernelCovariance& cov, std::int64_t n,
                            std::uint64_t seed) {
  const int order = kernel_order(kind);
  if (cov.order() != order) {
    throw std::invalid_argument("covariance order does not match kernel kind");
  }
  if (n < 1000) throw std::invalid_argument("Monte Carlo oracle needs at least 1000 samples");
  const Matrix L = regularized_cholesky(cov.entries);
  Rng rng = make_stream(seed, StreamTag::kMonteCarlo);

  Eigen::Vector4d z = Eigen::Vector4d::Zero();
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (int a = 0; a < order; ++a) z[a] = rng.normal();
    for (int a = 0; a < order; ++a) {
      double acc = 0.0;
      for (int b = 0; b <= a; ++b) acc += L(a, b) * z[b];
      x[a] = acc;
    }
    double value = 0.0;
    switch (kind) {
      // The arcsine kernel carries the 1/2 of the square loss.
      case KernelKind::SigmaSigma: value = 0.5 * sigma(x[0]) * sigma(x[1]); break;
      case KernelKind::DsigmaLambdaSigma: value = sigma_prime(x[0]) * x[1] * sigma(x[2]); break;
      case KernelKind::DsigmaDsigma: value = sigma_prime(x[0]) * sigma_prime(x[1]); break;
      case KernelKind::DsigmaDsigmaSigmaSigma:
        value = sigma_prime(x[0]) * sigma_prime(x[1]) * sigma(x[2]) * sigma(x[3]);
        break;
    }
    const double delta = value - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (value - mean);
  }
  const double nd = static_cast<double>(n);
  const double variance = m2 / (nd - 1.0);
  return {mean, std::sqrt(variance / nd)};
}

Matrix random_psd_covariance(int order, Rng& rng, double diag_lo, double diag_hi) {
  Matrix B(order, order + 1);
  for (int i = 0; i < order; ++i) {
    for (int j = 0; j <= order; ++j) B(i, j) = rng.normal();
  }
  const Matrix C = B * B.transpose();
  Vector scale(order);
  for (int i = 0; i < order; ++i) {
    const double target = diag_lo + (diag_hi - diag_lo) * rng.uniform();
    scale[i] = std::sqrt(target / C(i, i));
  }
  Matrix out = scale.asDiagonal() * C * scale.asDiagonal();
  return 0.5 * (out + out.transpose());
}

}  // namespace odedyn
