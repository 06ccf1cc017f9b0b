#pragma once

// Tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records every operation eagerly: values are computed when the op is
// called, and the tape is replayed in reverse by backward(). Nodes only ever
// reference earlier nodes, so the tape is acyclic by construction.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dfrd/tensor.hpp"

namespace dfrd {

using GradientMap = std::map<std::string, Tensor>;

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

struct BackwardContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& grad_output;
  // nullptr where the input does not need a gradient.
  std::span<Tensor* const> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Named trainable leaf; backward() reports its gradient under `name`.
  Var parameter(std::string name, Tensor value);
  /// Unnamed leaf that receives a gradient, readable through gradient().
  Var variable(Tensor value);

  /// Records an op. The output requires a gradient iff any input does.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id()).value; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of a scalar `loss` with respect to every parameter leaf.
  /// Parameters the loss does not depend on get all-zero gradients.
  GradientMap backward(Var loss);

  /// Gradient of the most recent backward() pass at `v` (zeros if unreached).
  Tensor gradient(Var v) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_parameter = false;
    std::string name;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  // A deque keeps node values at stable addresses while the tape grows.
  std::deque<Node> nodes_;
};

// Softmax of one logit row, max-shifted.
Tensor softmax(const Tensor& logits);
void softmax_row(std::span<const double> logits, std::span<double> out);
void log_softmax_row(std::span<const double> logits, std::span<double> out);

// ---- differentiable ops -------------------------------------------------

/// x[B,in] · W[out,in]ᵀ + b[out] → [B,out].
Var linear(Var x, Var weight, Var bias);
Var relu(Var x);
Var tanh(Var x);
Var exp(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// [B,p] ⊕ [B,q] → [B,p+q].
Var concat_cols(Var a, Var b);
/// Picks rows of table[C,d] by label → [B,d].
Var gather_rows(Var table, std::span<const int> rows);
/// Multiplies row b of x[B,C] by weights[b] (constant).
Var scale_rows(Var x, std::span<const double> weights);
Var sum(Var x);
Var mean(Var x);
/// Σ_b weights[b]·x[b] / B for x[B] and constant weights.
Var weighted_mean(Var x, std::span<const double> weights);

/// Mean over rows of −log softmax(logits_b)[label_b].
Var cross_entropy(Var logits, std::span<const int> labels);
/// Per-row KL(softmax(p) ‖ softmax(q)) → [B].
Var kl_div_rows(Var logits_p, Var logits_q);
/// Mean over rows of KL(softmax(p) ‖ softmax(q)).
Var kl_div(Var logits_p, Var logits_q);
/// ‖x_j − x_k‖₂ for every ordered row pair → [B,B].
Var pairwise_distances(Var x);

// ---- plain evaluations -----------------------------------------------------

double cross_entropy(const Tensor& logits, std::span<const int> labels);
double kl_div(const Tensor& logits_p, const Tensor& logits_q);

}  // namespace dfrd
