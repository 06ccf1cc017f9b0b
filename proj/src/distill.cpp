#include "dfrd/distill.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dfrd {

std::string_view to_string(WeightingVariant v) {
  switch (v) {
    case WeightingVariant::kAverage: return "average";
    case WeightingVariant::kStatic: return "static";
    case WeightingVariant::kDynamic: return "dynamic";
  }
  return "?";
}

std::string_view to_string(GateVariant v) {
  switch (v) {
    case GateVariant::kDiamond: return "diamond";
    case GateVariant::kTriangle: return "triangle";
    case GateVariant::kNabla: return "nabla";
  }
  return "?";
}

WeightingVariant parse_weighting_variant(std::string_view text) {
  for (auto v : {WeightingVariant::kAverage, WeightingVariant::kStatic, WeightingVariant::kDynamic})
    if (text == to_string(v)) return v;
  throw std::invalid_argument("unknown weighting variant '" + std::string(text) + "'");
}

GateVariant parse_gate_variant(std::string_view text) {
  for (auto v : {GateVariant::kDiamond, GateVariant::kTriangle, GateVariant::kNabla})
    if (text == to_string(v)) return v;
  throw std::invalid_argument("unknown gate variant '" + std::string(text) + "'");
}

bool WeightTable::can_sample() const {
  return std::any_of(label_probs.begin(), label_probs.end(), [](double p) { return p > 0.0; });
}

WeightTable build_weight_table(const Tensor& round_counts, const Tensor& shard_counts,
                               std::span<const std::size_t> active_clients, WeightingVariant variant) {
  require(round_counts.rank() == 2, "label statistics must be [N, C]");
  require(round_counts.same_shape(shard_counts), "round and shard label statistics disagree in shape");
  require(!active_clients.empty(), "no active clients");
  const std::size_t num_clients = round_counts.dim(0), classes = round_counts.dim(1);
  for (auto i : active_clients) require(i < num_clients, "active client index out of range");
  for (double v : round_counts.data()) require(v >= 0.0, "label counts must be non-negative");
  for (double v : shard_counts.data()) require(v >= 0.0, "label counts must be non-negative");

  WeightTable table{Tensor({num_clients, classes}), std::vector<double>(classes, 0.0), variant};
  if (variant == WeightingVariant::kAverage) {
    const double w = 1.0 / static_cast<double>(active_clients.size());
    for (auto i : active_clients)
      for (std::size_t y = 0; y < classes; ++y) table.tau.at(i, y) = w;
    std::fill(table.label_probs.begin(), table.label_probs.end(), 1.0 / static_cast<double>(classes));
    return table;
  }

  const Tensor& counts = variant == WeightingVariant::kDynamic ? round_counts : shard_counts;
  std::vector<double> per_label(classes, 0.0);
  for (std::size_t y = 0; y < classes; ++y)
    for (auto i : active_clients) per_label[y] += counts.at(i, y);
  const double total = std::accumulate(per_label.begin(), per_label.end(), 0.0);
  for (std::size_t y = 0; y < classes; ++y) {
    if (per_label[y] <= 0.0) continue;
    for (auto i : active_clients) table.tau.at(i, y) = counts.at(i, y) / per_label[y];
    table.label_probs[y] = per_label[y] / total;
  }
  return table;
}

std::vector<int> sample_labels(std::span<const double> probs, std::size_t count, Rng& rng) {
  require(!probs.empty(), "empty label distribution");
  double total = 0.0;
  for (double p : probs) {
    require(p >= 0.0, "negative label probability");
    total += p;
  }
  require(total > 0.0, "label distribution has no mass");
  std::discrete_distribution<int> dist(probs.begin(), probs.end());
  std::vector<int> out(count);
  for (auto& y : out) y = dist(rng);
  return out;
}

Var ensemble_logits(std::span<const Var> local_logits, std::span<const std::size_t> clients, const WeightTable& table,
                    std::span<const int> labels) {
  require(!local_logits.empty(), "ensemble needs at least one local model");
  require(local_logits.size() == clients.size(), "one client id per local model required");
  std::optional<Var> acc;
  std::vector<double> w(labels.size());
  for (std::size_t m = 0; m < local_logits.size(); ++m) {
    for (std::size_t b = 0; b < labels.size(); ++b)
      w[b] = table.tau.at(clients[m], static_cast<std::size_t>(labels[b]));
    Var term = scale_rows(local_logits[m], w);
    acc = acc ? add(*acc, term) : term;
  }
  return *acc;
}

Var ensemble_logits(std::span<const LocalModel> locals, const WeightTable& table, Var s, std::span<const int> labels) {
  std::vector<Var> logits;
  std::vector<std::size_t> clients;
  for (const auto& local : locals) {
    BoundParameters bound(s.graph(), local.params, false);
    logits.push_back(classifier_logits(bound, classifier_depth(local.params), s));
    clients.push_back(local.client);
  }
  return ensemble_logits(logits, clients, table, labels);
}

Tensor ensemble_logits(std::span<const LocalModel> locals, const WeightTable& table, const Tensor& s,
                       std::span<const int> labels) {
  Graph g;
  return ensemble_logits(locals, table, g.constant(s), labels).value();
}

Var loss_fidelity(Var ensemble, std::span<const int> labels) { return cross_entropy(ensemble, labels); }

std::vector<std::uint8_t> transfer_gate(const Tensor& global_logits, const Tensor& ensemble_logits,
                                        std::span<const int> labels, GateVariant variant) {
  require(global_logits.same_shape(ensemble_logits) && global_logits.rank() == 2, "gate inputs must be matching [B,C]");
  require(labels.size() == global_logits.dim(0), "one label per sample required");
  std::vector<std::uint8_t> gates(labels.size());
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const int student = argmax(global_logits.row(b));
    const int teacher = argmax(ensemble_logits.row(b));
    switch (variant) {
      case GateVariant::kDiamond: gates[b] = student != labels[b] && teacher == labels[b]; break;
      case GateVariant::kTriangle: gates[b] = 1; break;
      case GateVariant::kNabla: gates[b] = student != teacher; break;
    }
  }
  return gates;
}

Var loss_transferability(Var global_logits, Var ensemble, std::span<const std::uint8_t> gates) {
  std::vector<double> weights(gates.size());
  for (std::size_t b = 0; b < gates.size(); ++b) weights[b] = gates[b] ? -1.0 : 0.0;
  return weighted_mean(kl_div_rows(ensemble, global_logits), weights);
}

Var loss_transferability(Var global_logits, Var ensemble, std::span<const int> labels, GateVariant variant) {
  const auto gates = transfer_gate(global_logits.value(), ensemble.value(), labels, variant);
  return loss_transferability(global_logits, ensemble, gates);
}

Var loss_diversity(Var s, Var h) {
  const std::size_t batch = s.value().dim(0);
  require(batch >= 2, "diversity loss needs a batch of at least two");
  require(h.value().rank() == 2 && h.value().dim(0) == batch, "s and h batches disagree");
  Var weighted = mul(pairwise_distances(s), pairwise_distances(h));
  return exp(scale(sum(weighted), -1.0 / static_cast<double>(batch * batch)));
}

GeneratorLoss loss_generator(Var global_logits, Var ensemble, Var s, Var h, std::span<const int> labels,
                             GateVariant variant, GeneratorLossWeights weights) {
  const auto gates = transfer_gate(global_logits.value(), ensemble.value(), labels, variant);
  return loss_generator(global_logits, ensemble, s, h, labels, gates, weights);
}

GeneratorLoss loss_generator(Var global_logits, Var ensemble, Var s, Var h, std::span<const int> labels,
                             std::span<const std::uint8_t> gates, GeneratorLossWeights weights) {
  GeneratorLoss out;
  out.gates.assign(gates.begin(), gates.end());
  out.fidelity = loss_fidelity(ensemble, labels);
  out.transferability = loss_transferability(global_logits, ensemble, gates);
  out.diversity = loss_diversity(s, h);
  out.total = add(add(out.fidelity, scale(out.transferability, weights.beta_tran)),
                  scale(out.diversity, weights.beta_div));
  return out;
}

EmaGenerator ema_update(const EmaGenerator& ema, const ParameterSet& w, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, "EMA momentum must lie in [0, 1]");
  ParameterSet blended = ema.weights ? *ema.weights : zeros_like(w);
  require(blended.same_layout(w), "EMA and generator layouts differ");
  for (auto& [name, t] : blended) {
    const Tensor& src = w.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lambda * t[i] + (1.0 - lambda) * src[i];
  }
  return EmaGenerator{std::move(blended)};
}

DistillLoss loss_distill(Var global_logits, Var ensemble, const Var* global_ema_logits, const Var* ensemble_ema,
                         double alpha) {
  require((global_ema_logits == nullptr) == (ensemble_ema == nullptr), "EMA logits must come in pairs");
  DistillLoss out;
  out.kl = kl_div(global_logits, ensemble);
  out.total = out.kl;
  if (global_ema_logits) {
    out.kl_ema = kl_div(*global_ema_logits, *ensemble_ema);
    out.total = add(out.kl, scale(*out.kl_ema, alpha));
  }
  return out;
}

void ServerConfig::validate() const {
  require(iterations >= 0 && generator_steps >= 0 && distill_steps >= 0, "server iteration counts must be >= 0");
  require(generator_lr > 0.0 && distill_lr > 0.0, "server learning rates must be positive");
  require(b1 > 0.0 && b1 < 1.0 && b2 > 0.0 && b2 < 1.0, "moment decay rates must lie in (0,1)");
  require(batch_size >= 2, "server batch size must be at least 2");
  require(alpha >= 0.0, "alpha must be non-negative");
}

ServerResult server_update(std::span<const LocalModel> locals, ParameterSet global, GeneratorState generator,
                           const EmaGenerator& ema, const WeightTable& table, const ServerConfig& config,
                           std::uint64_t seed) {
  config.validate();
  require(!locals.empty(), "server update needs local models");
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t depth = classifier_depth(global);
  const std::size_t noise_dim = generator.spec.noise_dim;
  std::optional<GeneratorState> ema_generator;
  if (!ema.is_zero()) ema_generator = GeneratorState{generator.spec, *ema.weights};

  Rng rng(seed);
  AdamState adam = AdamState::for_params(generator.params, config.generator_lr, config.b1, config.b2,
                                         config.bias_correction);
  ServerResult result;
  ServerStats& stats = result.stats;
  int gen_evals = 0, distill_evals = 0;

  for (int e = 0; e < config.iterations; ++e) {
    const Tensor z = sample_noise(batch, noise_dim, rng);
    const std::vector<int> y = sample_labels(table.label_probs, batch, rng);
    adam.reset();

    for (int step = 0; step < config.generator_steps; ++step) {
      Graph g;
      BoundParameters gen_params(g, generator.params, true);
      const GeneratorOutput out = generator_forward(generator.spec, gen_params, g.constant(z), y);
      Var ensemble = ensemble_logits(locals, table, out.s, y);
      BoundParameters student(g, global, false);
      Var student_logits = classifier_logits(student, depth, out.s);
      GeneratorLoss loss = loss_generator(student_logits, ensemble, out.s, out.h, y, config.gate, config.loss_weights);
      adam_step_literal(adam, generator.params, g.backward(loss.total));

      stats.loss_fid += loss.fidelity.value().item();
      stats.loss_tran += loss.transferability.value().item();
      stats.loss_div += loss.diversity.value().item();
      stats.gate_rate += static_cast<double>(std::count(loss.gates.begin(), loss.gates.end(), 1)) /
                         static_cast<double>(batch);
      ++gen_evals;
    }

    for (int step = 0; step < config.distill_steps; ++step) {
      const Tensor s = generate(generator, z, y);
      const Tensor teacher = ensemble_logits(locals, table, s, y);
      Graph g;
      BoundParameters student(g, global, true);
      Var student_logits = classifier_logits(student, depth, g.constant(s));
      Var teacher_logits = g.constant(teacher);
      DistillLoss loss;
      if (ema_generator) {
        const Tensor z_ema = sample_noise(batch, noise_dim, rng);
        const std::vector<int> y_ema = sample_labels(table.label_probs, batch, rng);
        const Tensor s_ema = generate(*ema_generator, z_ema, y_ema);
        Var student_ema = classifier_logits(student, depth, g.constant(s_ema));
        Var teacher_ema = g.constant(ensemble_logits(locals, table, s_ema, y_ema));
        loss = loss_distill(student_logits, teacher_logits, &student_ema, &teacher_ema, config.alpha);
        stats.loss_kl_ema += loss.kl_ema->value().item();
      } else {
        loss = loss_distill(student_logits, teacher_logits, nullptr, nullptr, 0.0);
      }
      stats.loss_kl += loss.kl.value().item();
      stats.distill_trace.push_back(loss.total.value().item());
      global = sgd_step(std::move(global), g.backward(loss.total), config.distill_lr);
      ++distill_evals;
    }

    if (e + 1 == config.iterations) {
      result.last_synthetic = generate(generator, z, y);
      result.last_labels = y;
    }
  }

  if (gen_evals > 0) {
    stats.loss_fid /= gen_evals;
    stats.loss_tran /= gen_evals;
    stats.loss_div /= gen_evals;
    stats.gate_rate /= gen_evals;
  }
  if (distill_evals > 0) {
    stats.loss_kl /= distill_evals;
    stats.loss_kl_ema /= distill_evals;
  }
  result.global = std::move(global);
  result.generator = std::move(generator);
  return result;
}

}  // namespace dfrd
