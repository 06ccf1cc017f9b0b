#include "dfrd/heterofed.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dfrd/rng.hpp"

namespace dfrd {

BudgetPlan assign_budgets(int num_clients, int sigma, int rho) {
  require(num_clients >= 1 && sigma >= 1 && rho >= 1, "budget parameters must be positive");
  BudgetPlan plan{{}, sigma, rho};
  plan.ratios.reserve(static_cast<std::size_t>(num_clients));
  for (int i = 1; i <= num_clients; ++i) {
    const int exponent = std::min(sigma, (rho * i) / num_clients);
    plan.ratios.push_back(std::ldexp(1.0, -exponent));
  }
  return plan;
}

std::string_view to_string(ExtractionScheme scheme) {
  switch (scheme) {
    case ExtractionScheme::kStatic: return "static";
    case ExtractionScheme::kRandom: return "random";
    case ExtractionScheme::kRolling: return "rolling";
  }
  return "?";
}

ExtractionScheme parse_extraction_scheme(std::string_view text) {
  for (auto s : {ExtractionScheme::kStatic, ExtractionScheme::kRandom, ExtractionScheme::kRolling})
    if (text == to_string(s)) return s;
  throw std::invalid_argument("unknown extraction scheme '" + std::string(text) + "'");
}

IndexMap IndexMap::full(const ClassifierSpec& spec) {
  IndexMap map;
  for (auto k : spec.hidden_widths) {
    std::vector<std::size_t> all(k);
    std::iota(all.begin(), all.end(), 0);
    map.hidden.push_back(std::move(all));
  }
  return map;
}

IndexMap select_indices(const ClassifierSpec& spec, double ratio, ExtractionScheme scheme, int round, int client,
                        std::uint64_t seed) {
  require(round >= 0, "round must be non-negative");
  IndexMap map;
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) {
    const std::size_t full = spec.hidden_widths[l];
    const std::size_t count = slim_width(full, ratio);
    std::vector<std::size_t> picked;
    switch (scheme) {
      case ExtractionScheme::kStatic:
        picked.resize(count);
        std::iota(picked.begin(), picked.end(), 0);
        break;
      case ExtractionScheme::kRandom: {
        std::vector<std::size_t> all(full);
        std::iota(all.begin(), all.end(), 0);
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(client), l});
        std::shuffle(all.begin(), all.end(), rng);
        picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
        break;
      }
      case ExtractionScheme::kRolling: {
        const std::size_t start = static_cast<std::size_t>(round) % full;
        for (std::size_t j = 0; j < count; ++j) picked.push_back((start + j) % full);
        break;
      }
    }
    std::sort(picked.begin(), picked.end());
    map.hidden.push_back(std::move(picked));
  }
  return map;
}

namespace {

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

struct LayerCoords {
  std::vector<std::size_t> rows;
  std::vector<std::size_t> cols;
};

LayerCoords layer_coords(const ClassifierSpec& spec, const IndexMap& map, std::size_t layer) {
  const std::size_t depth = spec.num_layers();
  LayerCoords lc;
  lc.rows = layer + 1 < depth ? map.hidden[layer] : iota_vec(spec.num_classes);
  lc.cols = layer == 0 ? iota_vec(spec.input_dim) : map.hidden[layer - 1];
  return lc;
}

void check_index_map(const ClassifierSpec& spec, const IndexMap& map) {
  require(map.hidden.size() == spec.hidden_widths.size(), "index map has the wrong number of layers");
  for (std::size_t l = 0; l < map.hidden.size(); ++l) {
    require(!map.hidden[l].empty(), "index map selects no nodes");
    for (std::size_t j = 0; j < map.hidden[l].size(); ++j) {
      require(map.hidden[l][j] < spec.hidden_widths[l], "index " + std::to_string(map.hidden[l][j]) +
                                                            " out of range for layer of width " +
                                                            std::to_string(spec.hidden_widths[l]));
      require(j == 0 || map.hidden[l][j - 1] < map.hidden[l][j], "index map must be sorted and unique");
    }
  }
}

void check_global(const ParameterSet& global, const ClassifierSpec& spec) {
  const std::size_t depth = spec.num_layers();
  for (std::size_t l = 0; l < depth; ++l) {
    const std::size_t out = l + 1 < depth ? spec.hidden_widths[l] : spec.num_classes;
    const std::size_t in = l == 0 ? spec.input_dim : spec.hidden_widths[l - 1];
    require(global.at(weight_name(l)).shape() == Shape{out, in}, "global weight shape does not match the classifier layout");
    require(global.at(bias_name(l)).shape() == Shape{out}, "global bias shape does not match the classifier layout");
  }
}

// Calls fn(layer, coords) after checking that `sub` matches the index map.
template <typename Fn>
void for_each_layer(const ParameterSet& sub, const ClassifierSpec& spec, const IndexMap& map, Fn&& fn) {
  check_index_map(spec, map);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerCoords lc = layer_coords(spec, map, l);
    require(sub.at(weight_name(l)).shape() == Shape{lc.rows.size(), lc.cols.size()},
            "sub-model weight " + weight_name(l) + " does not match its index map");
    require(sub.at(bias_name(l)).shape() == Shape{lc.rows.size()},
            "sub-model bias " + bias_name(l) + " does not match its index map");
    fn(l, lc);
  }
}

}  // namespace

ParameterSet extract(const ParameterSet& global, const ClassifierSpec& spec, const IndexMap& index_map) {
  check_global(global, spec);
  check_index_map(spec, index_map);
  ParameterSet sub;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const LayerCoords lc = layer_coords(spec, index_map, l);
    const Tensor& w = global.at(weight_name(l));
    const Tensor& b = global.at(bias_name(l));
    Tensor sw({lc.rows.size(), lc.cols.size()});
    Tensor sb({lc.rows.size()});
    for (std::size_t r = 0; r < lc.rows.size(); ++r) {
      sb[r] = b[lc.rows[r]];
      for (std::size_t c = 0; c < lc.cols.size(); ++c) sw.at(r, c) = w.at(lc.rows[r], lc.cols[c]);
    }
    sub.insert(weight_name(l), std::move(sw));
    sub.insert(bias_name(l), std::move(sb));
  }
  return sub;
}

std::pair<ParameterSet, IndexMap> extract_submodel(const ParameterSet& global, const ClassifierSpec& spec, double ratio,
                                                   ExtractionScheme scheme, int round, int client,
                                                   std::uint64_t seed) {
  IndexMap map = select_indices(spec, ratio, scheme, round, client, seed);
  ParameterSet sub = extract(global, spec, map);
  return {std::move(sub), std::move(map)};
}

ParameterSet update_counts(const ParameterSet& global, const ClassifierSpec& spec,
                           std::span<const ClientUpdate> updates) {
  check_global(global, spec);
  ParameterSet counts = zeros_like(global);
  for (const auto& u : updates) {
    require(u.weight >= 0.0, "client weights must be non-negative");
    for_each_layer(u.params, spec, u.index_map, [&](std::size_t l, const LayerCoords& lc) {
      Tensor& cw = counts.at(weight_name(l));
      Tensor& cb = counts.at(bias_name(l));
      for (std::size_t r = 0; r < lc.rows.size(); ++r) {
        cb[lc.rows[r]] += u.weight;
        for (std::size_t c = 0; c < lc.cols.size(); ++c) cw.at(lc.rows[r], lc.cols[c]) += u.weight;
      }
    });
  }
  return counts;
}

ParameterSet aggregate(const ParameterSet& global, const ClassifierSpec& spec, std::span<const ClientUpdate> updates) {
  ParameterSet counts = update_counts(global, spec, updates);
  ParameterSet sums = zeros_like(global);
  for (const auto& u : updates) {
    for_each_layer(u.params, spec, u.index_map, [&](std::size_t l, const LayerCoords& lc) {
      Tensor& sw = sums.at(weight_name(l));
      Tensor& sb = sums.at(bias_name(l));
      const Tensor& w = u.params.at(weight_name(l));
      const Tensor& b = u.params.at(bias_name(l));
      for (std::size_t r = 0; r < lc.rows.size(); ++r) {
        sb[lc.rows[r]] += u.weight * b[r];
        for (std::size_t c = 0; c < lc.cols.size(); ++c) sw.at(lc.rows[r], lc.cols[c]) += u.weight * w.at(r, c);
      }
    });
  }
  ParameterSet out = global;
  for (auto& [name, t] : out) {
    const Tensor& den = counts.at(name);
    const Tensor& num = sums.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (den[i] > 0.0) t[i] = num[i] / den[i];
  }
  return out;
}

void write_index_map_csv(std::ostream& out, const IndexMap& index_map) {
  out << "layer,index\n";
  for (std::size_t l = 0; l < index_map.hidden.size(); ++l)
    for (auto i : index_map.hidden[l]) out << l << ',' << i << '\n';
}

}  // namespace dfrd
