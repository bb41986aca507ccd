#include "odedyn/risk.hpp"

#include <stdexcept>
#include <string>

#include "odedyn/kernels.hpp"

namespace odedyn {

RiskConvention risk_convention_from_string(std::string_view name) {
  if (name == "half") return RiskConvention::Half;
  if (name == "plain") return RiskConvention::Plain;
  throw std::invalid_argument("unknown risk convention: " + std::string(name));
}

std::string_view to_string(RiskConvention convention) {
  return convention == RiskConvention::Half ? "half" : "plain";
}

RiskValue population_risk_unchecked(const OverlapState& state, RiskConvention convention) {
  const int p = state.p();
  const int k = state.k();
  const auto& Q = state.Q;
  const auto& M = state.M;
  const auto& P = state.P;

  double teacher = 0.0;
  for (int r = 0; r < k; ++r) {
    for (int s = 0; s < k; ++s) teacher += kernel::sigma_sigma(P(r, r), P(r, s), P(s, s));
  }
  double student = 0.0;
  for (int j = 0; j < p; ++j) {
    for (int l = 0; l < p; ++l) student += kernel::sigma_sigma(Q(j, j), Q(j, l), Q(l, l));
  }
  double cross = 0.0;
  for (int j = 0; j < p; ++j) {
    for (int r = 0; r < k; ++r) cross += kernel::sigma_sigma(Q(j, j), M(j, r), P(r, r));
  }

  RiskValue out;
  out.teacher_term = teacher / (static_cast<double>(k) * k);
  out.student_term = student / (static_cast<double>(p) * p);
  out.cross_term = -2.0 * cross / (static_cast<double>(p) * k);
  const double factor = convention == RiskConvention::Half ? 0.5 : 1.0;
  out.total = factor * (out.teacher_term + out.student_term + out.cross_term);
  return out;
}

RiskValue population_risk(const OverlapState& state, RiskConvention convention) {
  state.validate();
  for (int j = 0; j < state.p(); ++j) {
    if (state.Q(j, j) < 0.0) throw InvalidState("negative diagonal entry in Q");
  }
  for (int r = 0; r < state.k(); ++r) {
    if (state.P(r, r) < 0.0) throw InvalidState("negative diagonal entry in P");
  }
  return population_risk_unchecked(state, convention);
}

}  // namespace odedyn
