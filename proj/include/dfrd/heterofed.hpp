#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "dfrd/models.hpp"
#include "dfrd/parameter_set.hpp"

namespace dfrd {

struct BudgetPlan {
  std::vector<double> ratios;  // R_i for clients 0..N-1
  int sigma = 0;
  int rho = 0;
};

/// R_i = (1/2)^min{σ, ⌊ρ·i/N⌋} for i = 1..N.
BudgetPlan assign_budgets(int num_clients, int sigma, int rho);

enum class ExtractionScheme { kStatic, kRandom, kRolling };

std::string_view to_string(ExtractionScheme scheme);
ExtractionScheme parse_extraction_scheme(std::string_view text);

/// Selected node indices per hidden layer, sorted ascending.
struct IndexMap {
  std::vector<std::vector<std::size_t>> hidden;

  /// Every node of every hidden layer.
  static IndexMap full(const ClassifierSpec& spec);
  friend bool operator==(const IndexMap&, const IndexMap&) = default;
};

/// Chooses ⌈R·K_l⌉ nodes per hidden layer:
///  static  – the first nodes;
///  random  – uniform without replacement, seeded by (seed, round, client, layer);
///  rolling – a window starting at round mod K_l, wrapping around.
IndexMap select_indices(const ClassifierSpec& spec, double ratio, ExtractionScheme scheme, int round, int client,
                        std::uint64_t seed);

/// Sub-block (selected out × selected in) of every layer; the input columns of
/// the first layer and the class rows of the last layer are always kept.
ParameterSet extract(const ParameterSet& global, const ClassifierSpec& spec, const IndexMap& index_map);

std::pair<ParameterSet, IndexMap> extract_submodel(const ParameterSet& global, const ClassifierSpec& spec, double ratio,
                                                   ExtractionScheme scheme, int round, int client, std::uint64_t seed);

struct ClientUpdate {
  ParameterSet params;
  IndexMap index_map;
  double weight = 0.0;  // p_i
};

/// Per global coordinate, the summed weight of the clients that hold it.
ParameterSet update_counts(const ParameterSet& global, const ClassifierSpec& spec,
                           std::span<const ClientUpdate> updates);

/// Selective averaging: every coordinate becomes the p-weighted mean over the
/// clients that hold it, and coordinates nobody holds keep their old value.
ParameterSet aggregate(const ParameterSet& global, const ClassifierSpec& spec, std::span<const ClientUpdate> updates);

/// CSV rows `layer,index`.
void write_index_map_csv(std::ostream& out, const IndexMap& index_map);

}  // namespace dfrd
