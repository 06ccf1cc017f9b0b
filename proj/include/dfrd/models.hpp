#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfrd/autodiff.hpp"
#include "dfrd/parameter_set.hpp"
#include "dfrd/rng.hpp"

namespace dfrd {

/// Dense ReLU classifier whose hidden layers can be slimmed to a width fraction.
struct ClassifierSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t num_classes = 0;

  std::size_t num_layers() const { return hidden_widths.size() + 1; }
  /// ⌈R·K_l⌉ nodes per hidden layer, never below one.
  std::vector<std::size_t> widths_at(double ratio) const;
  void validate() const;
};

/// Node count for a hidden layer of `full_width` nodes at width fraction `ratio`.
std::size_t slim_width(std::size_t full_width, double ratio);

std::string layer_name(std::size_t layer);
std::string weight_name(std::size_t layer);
std::string bias_name(std::size_t layer);

/// Glorot-uniform weights, zero biases.
ParameterSet init_classifier(const ClassifierSpec& spec, std::span<const std::size_t> hidden_widths, Rng& rng);
inline ParameterSet init_classifier(const ClassifierSpec& spec, Rng& rng) {
  return init_classifier(spec, spec.hidden_widths, rng);
}

/// Number of dense layers stored in a classifier parameter set.
std::size_t classifier_depth(const ParameterSet& params);
/// Hidden widths implied by the parameter shapes.
std::vector<std::size_t> classifier_widths(const ParameterSet& params);

Var classifier_logits(const BoundParameters& params, std::size_t num_layers, Var x);

/// Logits [B,C] for inputs x [B,input_dim]. Throws if `hidden_widths` does not
/// match the parameter shapes.
Tensor classifier_forward(const ParameterSet& params, std::span<const std::size_t> hidden_widths, const Tensor& x);
Tensor classifier_forward(const ParameterSet& params, const Tensor& x);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> row);

// ---------------------------------------------------------------------------

enum class MergeOp { kMul, kAdd, kCat, kNcat, kNone };

std::string_view to_string(MergeOp op);
MergeOp parse_merge_op(std::string_view text);

struct GeneratorSpec {
  std::size_t noise_dim = 0;
  std::size_t num_classes = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t output_dim = 0;
  MergeOp merge = MergeOp::kMul;

  bool has_embedding() const { return merge == MergeOp::kMul || merge == MergeOp::kAdd || merge == MergeOp::kCat; }
  /// Width of h = o(z, y).
  std::size_t merged_dim() const;
  void validate() const;
};

inline constexpr std::string_view kEmbeddingName = "embedding";

struct GeneratorState {
  GeneratorSpec spec;
  /// Dense layers "fc0".."fcL" plus the label embedding table [C,d] when the
  /// merge operator uses one.
  ParameterSet params;
};

/// Glorot-uniform weights, zero biases, standard-normal embedding rows.
GeneratorState init_generator(const GeneratorSpec& spec, Rng& rng);

/// h = o(z, y) for a single noise vector z [d].
Tensor merge(const Tensor& z, int label, MergeOp op, const Tensor* embedding);
/// Batched merge: z [B,d] → h [B,·]. `embedding` is ignored by ncat/none.
Var merge(Var z, std::span<const int> labels, MergeOp op, const Var* embedding);

struct GeneratorOutput {
  Var h;
  Var s;
};

/// s = tanh(MLP(o(z, y))) with ReLU hidden layers.
GeneratorOutput generator_forward(const GeneratorSpec& spec, const BoundParameters& params, Var z,
                                  std::span<const int> labels);
Tensor generate(const GeneratorState& gen, const Tensor& z, std::span<const int> labels);

/// B×d standard-normal noise.
Tensor sample_noise(std::size_t batch, std::size_t dim, Rng& rng);

}  // namespace dfrd
