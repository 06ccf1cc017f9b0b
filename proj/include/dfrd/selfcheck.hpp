#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfrd/autodiff.hpp"
#include "dfrd/parameter_set.hpp"

namespace dfrd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Largest norm-wise relative error ‖a−n‖/max(‖a‖,‖n‖,1e-12) over parameters,
/// comparing backward() against central differences of `loss`.
double gradient_check(const std::function<Var(Graph&, const BoundParameters&)>& loss, const ParameterSet& params,
                      double step = 1e-4);

/// Fast structural invariants, each on a small fixed fixture.
std::vector<CheckResult> run_self_checks();

}  // namespace dfrd
