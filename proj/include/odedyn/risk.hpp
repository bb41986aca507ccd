#pragma once

#include <string_view>

#include "odedyn/overlap.hpp"

namespace odedyn {

/// Prefactor of the arcsine sums. The arcsine kernels already equal half
/// the Gaussian expectation, so Plain is (1/2) E[(f_student - f_teacher)^2]
/// and Half is one quarter of the mean squared error.
enum class RiskConvention { Half, Plain };

RiskConvention risk_convention_from_string(std::string_view name);
std::string_view to_string(RiskConvention convention);

/// Population risk split into teacher, student and cross contributions.
/// The irreducible label-noise floor is not included.
struct RiskValue {
  double total = 0.0;
  double teacher_term = 0.0;
  double student_term = 0.0;
  double cross_term = 0.0;
};

/// Closed-form risk of the state. Validates the state first (throws
/// InvalidState when Omega is not PSD).
RiskValue population_risk(const OverlapState& state,
                          RiskConvention convention = RiskConvention::Half);

/// Same formula without validation; used on perturbed states by finite
/// differences and inside integrator loops that guard the state themselves.
RiskValue population_risk_unchecked(const OverlapState& state,
                                    RiskConvention convention = RiskConvention::Half);

}  // namespace odedyn
