#include "dfrd/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfrd {

std::size_t slim_width(std::size_t full_width, double ratio) {
  require(ratio > 0.0 && ratio <= 1.0, "width fraction must lie in (0, 1]");
  // The small slack keeps exact products such as 0.1·30 from rounding up.
  const auto n = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(full_width) - 1e-9));
  return std::max<std::size_t>(1, std::min(n, full_width));
}

std::vector<std::size_t> ClassifierSpec::widths_at(double ratio) const {
  std::vector<std::size_t> out;
  out.reserve(hidden_widths.size());
  for (auto k : hidden_widths) out.push_back(slim_width(k, ratio));
  return out;
}

void ClassifierSpec::validate() const {
  require(input_dim > 0, "classifier input_dim must be positive");
  require(num_classes >= 2, "classifier needs at least two classes");
  for (auto k : hidden_widths) require(k > 0, "hidden widths must be positive");
}

std::string layer_name(std::size_t layer) { return "fc" + std::to_string(layer); }
std::string weight_name(std::size_t layer) { return layer_name(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return layer_name(layer) + ".bias"; }

namespace {

Tensor glorot(std::size_t out, std::size_t in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({out, in});
  for (auto& v : w.data()) v = dist(rng);
  return w;
}

void add_dense_stack(ParameterSet& params, std::size_t in, std::span<const std::size_t> hidden, std::size_t out,
                     Rng& rng) {
  std::size_t prev = in;
  for (std::size_t l = 0; l <= hidden.size(); ++l) {
    const std::size_t width = l < hidden.size() ? hidden[l] : out;
    params.insert(weight_name(l), glorot(width, prev, rng));
    params.insert(bias_name(l), Tensor({width}));
    prev = width;
  }
}

Var dense_stack(const BoundParameters& params, std::size_t num_layers, Var x) {
  Var a = x;
  for (std::size_t l = 0; l < num_layers; ++l) {
    a = linear(a, params[weight_name(l)], params[bias_name(l)]);
    if (l + 1 < num_layers) a = relu(a);
  }
  return a;
}

}  // namespace

ParameterSet init_classifier(const ClassifierSpec& spec, std::span<const std::size_t> hidden_widths, Rng& rng) {
  spec.validate();
  require(hidden_widths.size() == spec.hidden_widths.size(), "hidden width count mismatch");
  for (std::size_t l = 0; l < hidden_widths.size(); ++l)
    require(hidden_widths[l] >= 1 && hidden_widths[l] <= spec.hidden_widths[l], "hidden width exceeds full width");
  ParameterSet params;
  add_dense_stack(params, spec.input_dim, hidden_widths, spec.num_classes, rng);
  return params;
}

std::size_t classifier_depth(const ParameterSet& params) {
  std::size_t depth = 0;
  while (params.contains(weight_name(depth))) ++depth;
  require(depth > 0, "parameter set holds no dense layers");
  return depth;
}

std::vector<std::size_t> classifier_widths(const ParameterSet& params) {
  const std::size_t depth = classifier_depth(params);
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l + 1 < depth; ++l) widths.push_back(params.at(weight_name(l)).dim(0));
  return widths;
}

Var classifier_logits(const BoundParameters& params, std::size_t num_layers, Var x) {
  return dense_stack(params, num_layers, x);
}

Tensor classifier_forward(const ParameterSet& params, std::span<const std::size_t> hidden_widths, const Tensor& x) {
  const auto actual = classifier_widths(params);
  require(actual.size() == hidden_widths.size() && std::equal(actual.begin(), actual.end(), hidden_widths.begin()),
          "classifier parameters do not match the requested widths");
  return classifier_forward(params, x);
}

Tensor classifier_forward(const ParameterSet& params, const Tensor& x) {
  Graph g;
  BoundParameters bound(g, params, false);
  return classifier_logits(bound, classifier_depth(params), g.constant(x)).value();
}

int argmax(std::span<const double> row) {
  require(!row.empty(), "argmax of an empty row");
  std::size_t best = 0;
  for (std::size_t c = 1; c < row.size(); ++c)
    if (row[c] > row[best]) best = c;
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------

std::string_view to_string(MergeOp op) {
  switch (op) {
    case MergeOp::kMul: return "mul";
    case MergeOp::kAdd: return "add";
    case MergeOp::kCat: return "cat";
    case MergeOp::kNcat: return "ncat";
    case MergeOp::kNone: return "none";
  }
  return "?";
}

MergeOp parse_merge_op(std::string_view text) {
  for (auto op : {MergeOp::kMul, MergeOp::kAdd, MergeOp::kCat, MergeOp::kNcat, MergeOp::kNone})
    if (text == to_string(op)) return op;
  throw std::invalid_argument("unknown merge operator '" + std::string(text) + "'");
}

std::size_t GeneratorSpec::merged_dim() const {
  switch (merge) {
    case MergeOp::kMul:
    case MergeOp::kAdd:
    case MergeOp::kNone: return noise_dim;
    case MergeOp::kCat: return 2 * noise_dim;
    case MergeOp::kNcat: return noise_dim + 1;
  }
  return noise_dim;
}

void GeneratorSpec::validate() const {
  require(noise_dim > 0 && output_dim > 0, "generator dimensions must be positive");
  require(num_classes >= 2, "generator needs at least two classes");
  for (auto k : hidden_widths) require(k > 0, "hidden widths must be positive");
}

GeneratorState init_generator(const GeneratorSpec& spec, Rng& rng) {
  spec.validate();
  GeneratorState gen{spec, {}};
  add_dense_stack(gen.params, spec.merged_dim(), spec.hidden_widths, spec.output_dim, rng);
  if (spec.has_embedding()) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor table({spec.num_classes, spec.noise_dim});
    for (auto& v : table.data()) v = normal(rng);
    gen.params.insert(std::string(kEmbeddingName), std::move(table));
  }
  return gen;
}

Tensor merge(const Tensor& z, int label, MergeOp op, const Tensor* embedding) {
  require(z.rank() == 1, "merge expects a noise vector");
  Graph g;
  Var zb = g.constant(Tensor({1, z.size()}, z.values()));
  const int labels[] = {label};
  Var h;
  if (embedding) {
    Var e = g.constant(*embedding);
    h = merge(zb, labels, op, &e);
  } else {
    h = merge(zb, labels, op, nullptr);
  }
  return Tensor({h.value().size()}, h.value().values());
}

Var merge(Var z, std::span<const int> labels, MergeOp op, const Var* embedding) {
  const Tensor& zv = z.value();
  require(zv.rank() == 2 && zv.dim(0) == labels.size(), "merge: noise batch and labels disagree");
  auto embedded = [&]() {
    require(embedding != nullptr, std::string("merge op '") + std::string(to_string(op)) + "' needs an embedding");
    require(embedding->value().rank() == 2, "embedding must be [C,d]");
    return gather_rows(*embedding, labels);
  };
  switch (op) {
    case MergeOp::kNone: return z;
    case MergeOp::kMul: {
      Var e = embedded();
      require(e.value().dim(1) == zv.dim(1), "mul merge needs embedding width equal to noise width");
      return mul(z, e);
    }
    case MergeOp::kAdd: {
      Var e = embedded();
      require(e.value().dim(1) == zv.dim(1), "add merge needs embedding width equal to noise width");
      return add(z, e);
    }
    case MergeOp::kCat: return concat_cols(z, embedded());
    case MergeOp::kNcat: {
      Tensor y({labels.size(), 1});
      for (std::size_t b = 0; b < labels.size(); ++b) {
        require(labels[b] >= 0, "negative label");
        y[b] = static_cast<double>(labels[b]);
      }
      return concat_cols(z, z.graph().constant(std::move(y)));
    }
  }
  throw std::invalid_argument("unknown merge operator");
}

GeneratorOutput generator_forward(const GeneratorSpec& spec, const BoundParameters& params, Var z,
                                  std::span<const int> labels) {
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < spec.num_classes, "generator label out of range");
  Var h;
  if (spec.has_embedding()) {
    Var e = params[std::string(kEmbeddingName)];
    h = merge(z, labels, spec.merge, &e);
  } else {
    h = merge(z, labels, spec.merge, nullptr);
  }
  Var s = tanh(dense_stack(params, spec.hidden_widths.size() + 1, h));
  return {h, s};
}

Tensor generate(const GeneratorState& gen, const Tensor& z, std::span<const int> labels) {
  Graph g;
  BoundParameters bound(g, gen.params, false);
  return generator_forward(gen.spec, bound, g.constant(z), labels).s.value();
}

Tensor sample_noise(std::size_t batch, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z({batch, dim});
  for (auto& v : z.data()) v = normal(rng);
  return z;
}

}  // namespace dfrd
