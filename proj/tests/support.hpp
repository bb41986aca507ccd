#pragma once
// Helpers shared by the unit tests: random overlap states and a drift
// assembled kernel by kernel from explicit field covariances.

#include <cstdint>

#include "odedyn/kernels.hpp"
#include "odedyn/ode.hpp"

namespace odedyn::testing {

/// Overlaps of random Gaussian weights in a small ambient dimension, scaled
/// so that diagonal entries are O(1).
inline OverlapState random_state(int p, int k, std::uint64_t seed, double scale = 1.0) {
  const int d = p + k + 3;
  Rng rng = Rng::stream(seed, 99);
  Matrix W(p, d);
  Matrix Wstar(k, d);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < d; ++j) W(i, j) = scale * rng.normal();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) Wstar(i, j) = rng.normal();
  return overlap_from_weights(W, Wstar);
}

/// Fields of the error signal with their weights: students -1/p, teachers +1/k.
inline std::vector<std::pair<FieldIndex, double>> error_fields(int p, int k) {
  std::vector<std::pair<FieldIndex, double>> out;
  for (int a = 0; a < k; ++a) out.push_back({FieldIndex::teacher(a), 1.0 / k});
  for (int a = 0; a < p; ++a) out.push_back({FieldIndex::student(a), -1.0 / p});
  return out;
}

/// Drift components summed term by term through assemble_covariance.
inline DriftComponents naive_drift(const OverlapState& s, double noise) {
  const int p = s.p();
  const int k = s.k();
  const auto fields = error_fields(p, k);
  DriftComponents out{Matrix::Zero(p, p), Matrix::Zero(p, k), Matrix::Zero(p, p)};
  auto i3 = [&](FieldIndex a, FieldIndex b, FieldIndex c) {
    return i3_dsigma_lambda_sigma(assemble_covariance(s, {a, b, c}).entries);
  };
  for (int j = 0; j < p; ++j) {
    for (int l = 0; l < p; ++l) {
      const FieldIndex fj = FieldIndex::student(j);
      const FieldIndex fl = FieldIndex::student(l);
      double lq = 0.0;
      double nq = 0.0;
      for (const auto& [fa, wa] : fields) {
        lq += wa * (i3(fj, fl, fa) + i3(fl, fj, fa));
        for (const auto& [fb, wb] : fields)
          nq += wa * wb *
                i4_dsigma_dsigma_sigma_sigma(assemble_covariance(s, {fj, fl, fa, fb}).entries);
      }
      out.learning_q(j, l) = lq;
      out.noise_q(j, l) = nq + noise * i4_dsigma_dsigma(assemble_covariance(s, {fj, fl}).entries);
    }
    for (int r = 0; r < k; ++r) {
      double lm = 0.0;
      for (const auto& [fa, wa] : fields)
        lm += wa * i3(FieldIndex::student(j), FieldIndex::teacher(r), fa);
      out.learning_m(j, r) = lm;
    }
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace odedyn::testing
