#include "dfrd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfrd {

const Tensor& Var::value() const {
  require(graph_ != nullptr, "unbound variable");
  return graph_->value(*this);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(std::string name, Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  node.is_parameter = true;
  node.name = std::move(name);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  require(value.all_finite(), "non-finite value produced by graph op");
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    require(&in.graph() == this && in.id() < nodes_.size(), "input from a different graph");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradientMap Graph::backward(Var loss) {
  require(&loss.graph() == this && loss.id() < nodes_.size(), "loss is not a node of this graph");
  require(nodes_[loss.id()].value.size() == 1, "backward() needs a scalar loss, got shape " +
                                                   shape_to_string(nodes_[loss.id()].value.shape()));
  for (auto& node : nodes_) node.has_grad = false;

  auto ensure_grad = [this](std::size_t id) -> Tensor& {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  };

  ensure_grad(loss.id()).fill(1.0);
  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad || !node.requires_grad || !node.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (auto in : node.inputs) {
      in_values.push_back(&nodes_[in].value);
      in_grads.push_back(nodes_[in].requires_grad ? &ensure_grad(in) : nullptr);
    }
    node.backward(BackwardContext{in_values, node.value, node.grad, in_grads});
  }

  GradientMap grads;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& node = nodes_[id];
    if (!node.is_parameter) continue;
    grads[node.name] = node.has_grad ? node.grad : Tensor(node.value.shape());
  }
  return grads;
}

Tensor Graph::gradient(Var v) const {
  const Node& node = nodes_.at(v.id());
  return node.has_grad ? node.grad : Tensor(node.value.shape());
}

// ---------------------------------------------------------------------------

void softmax_row(std::span<const double> logits, std::span<double> out) {
  require(!logits.empty(), "softmax of an empty row");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    out[c] = std::exp(logits[c] - peak);
    total += out[c];
  }
  for (auto& v : out) v /= total;
}

void log_softmax_row(std::span<const double> logits, std::span<double> out) {
  require(!logits.empty(), "log-softmax of an empty row");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);
  for (std::size_t c = 0; c < logits.size(); ++c) out[c] = logits[c] - log_norm;
}

Tensor softmax(const Tensor& logits) {
  require(logits.rank() == 1 && logits.size() >= 1, "softmax expects a [C] tensor");
  Tensor out(logits.shape());
  softmax_row(logits.data(), out.data());
  return out;
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  require(t.rank() == 2, std::string(what) + " expects a rank-2 tensor, got " + shape_to_string(t.shape()));
}

template <typename Fn>
Var unary(Var x, Fn&& fn, BackwardFn backward) {
  Tensor out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(in[i]);
  return x.graph().record(std::move(out), {x}, std::move(backward));
}

void check_same(Var a, Var b, const char* op) {
  require(a.value().same_shape(b.value()), std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                                               " vs " + shape_to_string(b.shape()));
}

}  // namespace

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_matrix(xv, "linear input");
  require_matrix(wv, "linear weight");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  require(wv.dim(1) == in, "linear: weight " + shape_to_string(wv.shape()) + " does not accept input " +
                               shape_to_string(xv.shape()));
  require(bias.value().rank() == 1 && bias.value().size() == out, "linear: bias shape mismatch");

  Tensor y({batch, out});
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < batch; ++b) {
    const auto xr = xv.row(b);
    for (std::size_t o = 0; o < out; ++o) {
      const auto wr = wv.row(o);
      double acc = bv[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      y.at(b, o) = acc;
    }
  }
  return x.graph().record(std::move(y), {x, weight, bias}, [](const BackwardContext& ctx) {
    const Tensor& xv = *ctx.inputs[0];
    const Tensor& wv = *ctx.inputs[1];
    const Tensor& g = ctx.grad_output;
    const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
    if (Tensor* gx = ctx.grad_inputs[0]) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g.at(b, o);
          if (go == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gx->at(b, i) += go * wv.at(o, i);
        }
    }
    if (Tensor* gw = ctx.grad_inputs[1]) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g.at(b, o);
          if (go == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gw->at(o, i) += go * xv.at(b, i);
        }
    }
    if (Tensor* gb = ctx.grad_inputs[2]) {
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t o = 0; o < out; ++o) (*gb)[o] += g.at(b, o);
    }
  });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < gx->size(); ++i)
        if ((*ctx.inputs[0])[i] > 0.0) (*gx)[i] += ctx.grad_output[i];
  });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < gx->size(); ++i) {
        const double y = ctx.output[i];
        (*gx)[i] += ctx.grad_output[i] * (1.0 - y * y);
      }
  });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += ctx.grad_output[i] * ctx.output[i];
  });
}

Var add(Var a, Var b) {
  check_same(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    for (Tensor* g : ctx.grad_inputs)
      if (g)
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.grad_output[i];
  });
}

Var sub(Var a, Var b) {
  check_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_output[i];
    if (Tensor* gb = ctx.grad_inputs[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= ctx.grad_output[i];
  });
}

Var mul(Var a, Var b) {
  check_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_output[i] * (*ctx.inputs[1])[i];
    if (Tensor* gb = ctx.grad_inputs[1])
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += ctx.grad_output[i] * (*ctx.inputs[0])[i];
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double v) { return v * factor; }, [factor](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad_inputs[0])
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += ctx.grad_output[i] * factor;
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "concat_cols");
  require_matrix(bv, "concat_cols");
  require(av.dim(0) == bv.dim(0), "concat_cols: row count mismatch");
  const std::size_t rows = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor out({rows, p + q});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.row(r).begin(), p, out.row(r).begin());
    std::copy_n(bv.row(r).begin(), q, out.row(r).begin() + static_cast<std::ptrdiff_t>(p));
  }
  return a.graph().record(std::move(out), {a, b}, [p, q](const BackwardContext& ctx) {
    const std::size_t rows = ctx.grad_output.dim(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto g = ctx.grad_output.row(r);
      if (Tensor* ga = ctx.grad_inputs[0])
        for (std::size_t j = 0; j < p; ++j) ga->at(r, j) += g[j];
      if (Tensor* gb = ctx.grad_inputs[1])
        for (std::size_t j = 0; j < q; ++j) gb->at(r, j) += g[p + j];
    }
  });
}

Var gather_rows(Var table, std::span<const int> rows) {
  const Tensor& tv = table.value();
  require_matrix(tv, "gather_rows");
  const std::size_t width = tv.dim(1);
  require(!rows.empty(), "gather_rows: no rows requested");
  Tensor out({rows.size(), width});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    require(rows[b] >= 0 && static_cast<std::size_t>(rows[b]) < tv.dim(0), "gather_rows: row index out of range");
    std::copy_n(tv.row(static_cast<std::size_t>(rows[b])).begin(), width, out.row(b).begin());
  }
  std::vector<int> picked(rows.begin(), rows.end());
  return table.graph().record(std::move(out), {table}, [picked = std::move(picked)](const BackwardContext& ctx) {
    Tensor* gt = ctx.grad_inputs[0];
    if (!gt) return;
    for (std::size_t b = 0; b < picked.size(); ++b) {
      const auto g = ctx.grad_output.row(b);
      auto dst = gt->row(static_cast<std::size_t>(picked[b]));
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var scale_rows(Var x, std::span<const double> weights) {
  const Tensor& xv = x.value();
  require_matrix(xv, "scale_rows");
  require(weights.size() == xv.dim(0), "scale_rows: one weight per row required");
  Tensor out = xv;
  for (std::size_t r = 0; r < weights.size(); ++r)
    for (auto& v : out.row(r)) v *= weights[r];
  std::vector<double> w(weights.begin(), weights.end());
  return x.graph().record(std::move(out), {x}, [w = std::move(w)](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (std::size_t r = 0; r < w.size(); ++r) {
        const auto g = ctx.grad_output.row(r);
        auto dst = gx->row(r);
        for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j] * w[r];
      }
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.graph().record(Tensor::scalar(total), {x}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (auto& v : gx->data()) v += ctx.grad_output[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var weighted_mean(Var x, std::span<const double> weights) {
  const Tensor& xv = x.value();
  require(xv.rank() == 1 && weights.size() == xv.size(), "weighted_mean: weights must match a [B] input");
  const double inv = 1.0 / static_cast<double>(xv.size());
  double total = 0.0;
  for (std::size_t b = 0; b < xv.size(); ++b) total += weights[b] * xv[b];
  std::vector<double> w(weights.begin(), weights.end());
  return x.graph().record(Tensor::scalar(total * inv), {x}, [w = std::move(w), inv](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad_inputs[0])
      for (std::size_t b = 0; b < w.size(); ++b) (*gx)[b] += ctx.grad_output[0] * w[b] * inv;
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "cross_entropy");
  const std::size_t batch = lv.dim(0), classes = lv.dim(1);
  require(labels.size() == batch, "cross_entropy: one label per row required");
  std::vector<double> logp(classes);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    require(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < classes,
            "cross_entropy: label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(classes) + ")");
    log_softmax_row(lv.row(b), logp);
    total -= logp[static_cast<std::size_t>(labels[b])];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.graph().record(
      Tensor::scalar(total / static_cast<double>(batch)), {logits}, [y = std::move(y)](const BackwardContext& ctx) {
        Tensor* gl = ctx.grad_inputs[0];
        if (!gl) return;
        const Tensor& lv = *ctx.inputs[0];
        const std::size_t batch = lv.dim(0);
        const double g = ctx.grad_output[0] / static_cast<double>(batch);
        std::vector<double> p(lv.dim(1));
        for (std::size_t b = 0; b < batch; ++b) {
          softmax_row(lv.row(b), p);
          p[static_cast<std::size_t>(y[b])] -= 1.0;
          auto dst = gl->row(b);
          for (std::size_t c = 0; c < p.size(); ++c) dst[c] += g * p[c];
        }
      });
}

Var kl_div_rows(Var logits_p, Var logits_q) {
  check_same(logits_p, logits_q, "kl_div");
  const Tensor& pv = logits_p.value();
  const Tensor& qv = logits_q.value();
  require_matrix(pv, "kl_div");
  const std::size_t batch = pv.dim(0), classes = pv.dim(1);
  std::vector<double> lp(classes), lq(classes);
  Tensor out({batch});
  for (std::size_t b = 0; b < batch; ++b) {
    log_softmax_row(pv.row(b), lp);
    log_softmax_row(qv.row(b), lq);
    double kl = 0.0;
    for (std::size_t c = 0; c < classes; ++c) kl += std::exp(lp[c]) * (lp[c] - lq[c]);
    out[b] = kl;
  }
  return logits_p.graph().record(std::move(out), {logits_p, logits_q}, [](const BackwardContext& ctx) {
    const Tensor& pv = *ctx.inputs[0];
    const Tensor& qv = *ctx.inputs[1];
    const std::size_t batch = pv.dim(0), classes = pv.dim(1);
    std::vector<double> lp(classes), lq(classes);
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = ctx.grad_output[b];
      if (g == 0.0) continue;
      log_softmax_row(pv.row(b), lp);
      log_softmax_row(qv.row(b), lq);
      const double kl = ctx.output[b];
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(lp[c]);
        const double q = std::exp(lq[c]);
        if (Tensor* gp = ctx.grad_inputs[0]) gp->at(b, c) += g * p * (lp[c] - lq[c] - kl);
        if (Tensor* gq = ctx.grad_inputs[1]) gq->at(b, c) += g * (q - p);
      }
    }
  });
}

Var kl_div(Var logits_p, Var logits_q) { return mean(kl_div_rows(logits_p, logits_q)); }

Var pairwise_distances(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "pairwise_distances");
  const std::size_t batch = xv.dim(0), width = xv.dim(1);
  Tensor out({batch, batch});
  for (std::size_t j = 0; j < batch; ++j)
    for (std::size_t k = j + 1; k < batch; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < width; ++i) {
        const double d = xv.at(j, i) - xv.at(k, i);
        acc += d * d;
      }
      out.at(j, k) = out.at(k, j) = std::sqrt(acc);
    }
  return x.graph().record(std::move(out), {x}, [](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad_inputs[0];
    if (!gx) return;
    const Tensor& xv = *ctx.inputs[0];
    const std::size_t batch = xv.dim(0), width = xv.dim(1);
    for (std::size_t j = 0; j < batch; ++j)
      for (std::size_t k = 0; k < batch; ++k) {
        const double dist = ctx.output.at(j, k);
        // Subgradient 0 where two rows coincide.
        if (j == k || dist == 0.0) continue;
        const double g = ctx.grad_output.at(j, k) / dist;
        if (g == 0.0) continue;
        for (std::size_t i = 0; i < width; ++i) {
          const double d = (xv.at(j, i) - xv.at(k, i)) * g;
          gx->at(j, i) += d;
          gx->at(k, i) -= d;
        }
      }
  });
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  Graph g;
  return cross_entropy(g.constant(logits), labels).value().item();
}

double kl_div(const Tensor& logits_p, const Tensor& logits_q) {
  Graph g;
  return kl_div(g.constant(logits_p), g.constant(logits_q)).value().item();
}

}  // namespace dfrd
