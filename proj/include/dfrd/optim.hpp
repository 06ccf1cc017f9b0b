#pragma once

#include "dfrd/autodiff.hpp"
#include "dfrd/parameter_set.hpp"

namespace dfrd {

/// p ← p − lr·g for every parameter. Every parameter needs a gradient entry.
ParameterSet sgd_step(ParameterSet params, const GradientMap& grads, double lr);

enum class BiasCorrection {
  kFixed,        // m̂ = m/(1−b1), v̂ = v/(1−b2) at every step
  kStepPowered,  // textbook Adam: m̂ = m/(1−b1ᵗ), v̂ = v/(1−b2ᵗ)
};

/// Moment-based optimizer state for the generator.
///
/// The default kFixed correction reproduces the server pseudocode verbatim:
/// the correction denominators do not depend on the step count, and the
/// moments are reset to zero at the start of every outer server iteration
/// (call reset()). This differs from textbook Adam on purpose; kStepPowered
/// is available for sensitivity runs.
struct AdamState {
  ParameterSet m;
  ParameterSet v;
  double b1 = 0.5;
  double b2 = 0.999;
  double lr = 2e-4;
  double eps = 1e-8;
  BiasCorrection correction = BiasCorrection::kFixed;
  int step = 0;

  static AdamState for_params(const ParameterSet& params, double lr, double b1, double b2,
                              BiasCorrection correction = BiasCorrection::kFixed);
  /// Sets m = v = 0 and the step counter to zero.
  void reset();
};

void adam_step_literal(AdamState& state, ParameterSet& params, const GradientMap& grads);

}  // namespace dfrd
