#pragma once

// Server-side data-free distillation: generator training against a weighted
// teacher ensemble, EMA generator, and distillation of the global model.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dfrd/autodiff.hpp"
#include "dfrd/models.hpp"
#include "dfrd/optim.hpp"
#include "dfrd/parameter_set.hpp"
#include "dfrd/rng.hpp"

namespace dfrd {

enum class WeightingVariant {
  kAverage,  // τ = 1/|S_t|, p uniform
  kStatic,   // ratios of full-shard label histograms
  kDynamic,  // ratios of labels touched during this round's local training
};

enum class GateVariant {
  kDiamond,   // ε = 1 iff the student misses y and the ensemble hits y
  kTriangle,  // ε = 1 always
  kNabla,     // ε = 1 iff student and ensemble disagree
};

std::string_view to_string(WeightingVariant v);
std::string_view to_string(GateVariant v);
WeightingVariant parse_weighting_variant(std::string_view text);
GateVariant parse_gate_variant(std::string_view text);

/// Per-(client, label) logit weights and the label sampling distribution.
struct WeightTable {
  Tensor tau;                       // [N, C]; rows of inactive clients are zero
  std::vector<double> label_probs;  // p(y), length C
  WeightingVariant variant = WeightingVariant::kDynamic;

  /// True when p(y) has positive mass, i.e. labels can be sampled.
  bool can_sample() const;
};

/// `round_counts` and `shard_counts` are [N, C] label statistics; the first is
/// used by kDynamic, the second by kStatic. Labels no active client holds get
/// τ = 0 and p = 0.
WeightTable build_weight_table(const Tensor& round_counts, const Tensor& shard_counts,
                               std::span<const std::size_t> active_clients, WeightingVariant variant);

/// i.i.d. categorical draws from p.
std::vector<int> sample_labels(std::span<const double> probs, std::size_t count, Rng& rng);

struct LocalModel {
  std::size_t client = 0;
  ParameterSet params;
};

/// Σ_i τ[client_i, y_b]·logits_i[b] per sample.
Var ensemble_logits(std::span<const Var> local_logits, std::span<const std::size_t> clients, const WeightTable& table,
                    std::span<const int> labels);
/// Forwards `s` through every (frozen) local model and combines the logits.
Var ensemble_logits(std::span<const LocalModel> locals, const WeightTable& table, Var s, std::span<const int> labels);
Tensor ensemble_logits(std::span<const LocalModel> locals, const WeightTable& table, const Tensor& s,
                       std::span<const int> labels);

Var loss_fidelity(Var ensemble, std::span<const int> labels);

std::vector<std::uint8_t> transfer_gate(const Tensor& global_logits, const Tensor& ensemble_logits,
                                        std::span<const int> labels, GateVariant variant);

/// −mean_b ε_b·KL(ensemble_b ‖ global_b). The gate is a constant.
Var loss_transferability(Var global_logits, Var ensemble, std::span<const std::uint8_t> gates);
Var loss_transferability(Var global_logits, Var ensemble, std::span<const int> labels, GateVariant variant);

/// exp(−Σ_{j,k} ‖s_j−s_k‖·‖h_j−h_k‖ / B²) over all ordered pairs.
Var loss_diversity(Var s, Var h);

struct GeneratorLoss {
  Var total;
  Var fidelity;
  Var transferability;
  Var diversity;
  std::vector<std::uint8_t> gates;
};

struct GeneratorLossWeights {
  double beta_tran = 1.0;
  double beta_div = 1.0;
};

GeneratorLoss loss_generator(Var global_logits, Var ensemble, Var s, Var h, std::span<const int> labels,
                             GateVariant variant, GeneratorLossWeights weights);
/// Same objective with a caller-fixed gate.
GeneratorLoss loss_generator(Var global_logits, Var ensemble, Var s, Var h, std::span<const int> labels,
                             std::span<const std::uint8_t> gates, GeneratorLossWeights weights);

/// Exponential moving average of generator weights. An empty `weights` is the
/// all-zero initial state.
struct EmaGenerator {
  std::optional<ParameterSet> weights;

  bool is_zero() const { return !weights.has_value(); }
};

/// w̃ ← λ·w̃ + (1−λ)·w. Blends against zero when `ema` is still the initial state.
EmaGenerator ema_update(const EmaGenerator& ema, const ParameterSet& w, double lambda);

struct DistillLoss {
  Var total;
  Var kl;
  std::optional<Var> kl_ema;
};

/// KL(global(s) ‖ ensemble(s)) + α·KL(global(s̃) ‖ ensemble(s̃)). Pass null EMA
/// logits to evaluate the first term only.
DistillLoss loss_distill(Var global_logits, Var ensemble, const Var* global_ema_logits, const Var* ensemble_ema,
                         double alpha);

struct ServerConfig {
  int iterations = 10;
  int generator_steps = 5;
  int distill_steps = 2;
  double generator_lr = 2e-4;
  double b1 = 0.5;
  double b2 = 0.999;
  double distill_lr = 0.01;
  GeneratorLossWeights loss_weights;
  double alpha = 0.5;
  int batch_size = 64;
  GateVariant gate = GateVariant::kDiamond;
  BiasCorrection bias_correction = BiasCorrection::kFixed;

  void validate() const;
};

struct ServerStats {
  double loss_fid = 0.0;
  double loss_tran = 0.0;
  double loss_div = 0.0;
  double loss_kl = 0.0;
  double loss_kl_ema = 0.0;
  double gate_rate = 0.0;
  /// Distillation loss on each step, in order.
  std::vector<double> distill_trace;
};

struct ServerResult {
  ParameterSet global;
  GeneratorState generator;
  ServerStats stats;
  Tensor last_synthetic;  // final generator batch of the last iteration
  std::vector<int> last_labels;
};

/// One server phase: alternating generator training (moment optimizer, reset
/// per outer iteration, on a fixed noise/label batch) and SGD distillation of
/// the global model. Local models stay frozen.
ServerResult server_update(std::span<const LocalModel> locals, ParameterSet global, GeneratorState generator,
                           const EmaGenerator& ema, const WeightTable& table, const ServerConfig& config,
                           std::uint64_t seed);

}  // namespace dfrd
