#pragma once

// Reference implementations used by the tests. They are written directly from
// the defining formulas, independently of the library code paths they check.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dfrd/parameter_set.hpp"
#include "dfrd/rng.hpp"
#include "dfrd/tensor.hpp"

namespace oracle {

using dfrd::ParameterSet;
using dfrd::Tensor;

std::vector<double> softmax(std::span<const double> logits);
double cross_entropy(const Tensor& logits, std::span<const int> labels);
/// Σ_c P_c ln(P_c/Q_c) for one row.
double kl_row(std::span<const double> p_logits, std::span<const double> q_logits);
double kl_mean(const Tensor& p, const Tensor& q);
double diversity(const Tensor& s, const Tensor& h);

Tensor random_tensor(dfrd::Shape shape, dfrd::Rng& rng, double scale = 1.0);

/// Central differences of `f` at every coordinate of every tensor in `params`.
std::map<std::string, Tensor> numeric_gradient(const std::function<double(const ParameterSet&)>& f,
                                               const ParameterSet& params, double step);

/// ‖a−b‖ / max(‖a‖, ‖b‖), with both norms taken over all tensors jointly;
/// 0 when both are zero.
double relative_error(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b);

/// Σ_i w_i·x_i / Σ_i w_i per coordinate, over full-size parameter sets.
ParameterSet weighted_average(std::span<const ParameterSet> models, std::span<const double> weights);

/// Upper critical value of the chi-square distribution.
double chi_square_critical(double dof, double significance);

}  // namespace oracle
