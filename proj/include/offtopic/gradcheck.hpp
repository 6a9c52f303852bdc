#pragma once

// Central-difference gradient verification. Runs in double precision only:
// float32 rounding swamps the difference quotient long before the 1e-4
// tolerances used by the test suite.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "offtopic/errors.hpp"
#include "offtopic/tensor.hpp"

namespace offtopic {

struct GradCheckResult {
  double max_error = 0.0;       // relative with a small denominator floor
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Denominator floor for the relative error. Below this magnitude the
// difference quotient's own noise (~1e-11 at epsilon 1e-5) dominates any true
// relative comparison, so tiny entries are judged on floor-scaled absolute
// error instead. A dropped or sign-flipped gradient of magnitude 1e-7 still
// scores ~1e-1 and is caught.
inline constexpr double kGradCheckDenomFloor = 1e-6;

// loss_fn(with_grad): evaluates the scalar loss; when with_grad is true it
// must also accumulate gradients into the named parameters (whose grads the
// harness zeroes beforehand). The function must be deterministic — identical
// calls must produce bit-identical values — so dropout and any other sampled
// noise must be disabled or frozen.
inline GradCheckResult finite_difference_check(
    const std::function<double(bool)>& loss_fn,
    const std::vector<std::pair<std::string, TensorPtr<double>>>& params, double epsilon) {
  if (epsilon < 1e-6 || epsilon > 1e-4) {
    throw ValueError("finite_difference_check: epsilon " + std::to_string(epsilon) +
                     " outside [1e-6, 1e-4]");
  }
  for (const auto& [name, p] : params) {
    if (!p->requires_grad) {
      throw ValueError("finite_difference_check: parameter '" + name + "' has no gradient slot");
    }
    p->zero_grad();
  }
  const double base = loss_fn(true);
  const double replay = loss_fn(false);
  if (base != replay) {
    throw ValueError("finite_difference_check: loss function is not deterministic (" +
                     std::to_string(base) + " vs " + std::to_string(replay) + ")");
  }

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) analytic.push_back(p->grad);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& tensor = *params[pi].second;
    for (std::size_t i = 0; i < tensor.value.size(); ++i) {
      const double saved = tensor.value[i];
      tensor.value[i] = saved + epsilon;
      const double up = loss_fn(false);
      tensor.value[i] = saved - epsilon;
      const double down = loss_fn(false);
      tensor.value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[pi][i];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), kGradCheckDenomFloor});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_error) {
        result.max_error = err;
        result.worst_param = params[pi].first;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace offtopic
