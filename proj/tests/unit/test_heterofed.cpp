#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "dfrd/heterofed.hpp"
#include "oracles.hpp"

using namespace dfrd;

namespace {

const ExtractionScheme kSchemes[] = {ExtractionScheme::kStatic, ExtractionScheme::kRandom, ExtractionScheme::kRolling};

/// Full-size copy of `global` with every unit outside `map` disconnected.
ParameterSet mask_to(const ParameterSet& global, const ClassifierSpec& spec, const IndexMap& map) {
  ParameterSet out = global;
  for (std::size_t l = 0; l < spec.hidden_widths.size(); ++l) {
    const auto& keep = map.hidden[l];
    for (std::size_t k = 0; k < spec.hidden_widths[l]; ++k) {
      if (std::binary_search(keep.begin(), keep.end(), k)) continue;
      Tensor& w = out.at(weight_name(l));
      for (std::size_t c = 0; c < w.dim(1); ++c) w.at(k, c) = 0.0;
      out.at(bias_name(l))[k] = 0.0;
      Tensor& next = out.at(weight_name(l + 1));
      for (std::size_t r = 0; r < next.dim(0); ++r) next.at(r, k) = 0.0;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("budget lists for ten clients") {
  const double h = 0.5, q = 0.25, e = 0.125, s = 0.0625;
  CHECK(assign_budgets(10, 4, 10).ratios == std::vector<double>{h, q, e, s, s, s, s, s, s, s});
  CHECK(assign_budgets(10, 4, 40).ratios == std::vector<double>(10, s));
  CHECK(assign_budgets(10, 4, 5).ratios == std::vector<double>{1, h, h, q, q, e, e, s, s, s});
  CHECK(assign_budgets(10, 4, 5).ratios.size() == 10);
  CHECK_THROWS_AS(assign_budgets(0, 4, 5), std::invalid_argument);
  CHECK_THROWS_AS(assign_budgets(10, 0, 5), std::invalid_argument);
}

TEST_CASE("budgets follow the exponent formula for arbitrary arguments") {
  for (int n = 1; n <= 30; ++n)
    for (int sigma = 1; sigma <= 5; ++sigma)
      for (int rho : {1, 3, 5, 10, 40, 200}) {
        const auto plan = assign_budgets(n, sigma, rho);
        REQUIRE(plan.ratios.size() == static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) {
          const int exponent = std::min(sigma, static_cast<int>(std::floor(static_cast<double>(rho) * i / n)));
          CHECK(plan.ratios[static_cast<std::size_t>(i - 1)] == std::pow(0.5, exponent));
        }
        if (rho >= 4 * n && sigma <= 4)
          for (double r : plan.ratios) CHECK(r == std::pow(0.5, sigma));
      }
}

TEST_CASE("index selection examples") {
  const ClassifierSpec four{3, {4}, 2};
  CHECK(select_indices(four, 0.5, ExtractionScheme::kRolling, 3, 0, 1).hidden[0] == std::vector<std::size_t>{0, 3});
  CHECK(select_indices(four, 0.5, ExtractionScheme::kRolling, 1, 0, 1).hidden[0] == std::vector<std::size_t>{1, 2});
  const ClassifierSpec eight{3, {8}, 2};
  CHECK(select_indices(eight, 0.25, ExtractionScheme::kStatic, 5, 2, 1).hidden[0] == std::vector<std::size_t>{0, 1});
  const IndexMap r = select_indices(eight, 0.5, ExtractionScheme::kRandom, 2, 1, 9);
  CHECK(r.hidden[0].size() == 4);
  CHECK(std::is_sorted(r.hidden[0].begin(), r.hidden[0].end()));
  CHECK(select_indices(eight, 0.5, ExtractionScheme::kRandom, 2, 1, 9) == r);
}

TEST_CASE("full width selects everything and extraction returns the global model") {
  const ClassifierSpec spec{5, {6, 4}, 3};
  Rng rng(1);
  const ParameterSet global = init_classifier(spec, rng);
  for (auto scheme : kSchemes) {
    auto [sub, map] = extract_submodel(global, spec, 1.0, scheme, 7, 2, 3);
    CHECK(map == IndexMap::full(spec));
    CHECK(sub == global);
  }
}

TEST_CASE("selected index sets are unique, sorted, in range and of ceil size") {
  const ClassifierSpec spec{4, {7, 12, 3}, 2};
  for (auto scheme : kSchemes)
    for (double ratio : {1.0, 0.5, 0.3, 0.125, 0.0625})
      for (int t = 0; t < 15; ++t) {
        const IndexMap map = select_indices(spec, ratio, scheme, t, t % 4, 11);
        for (std::size_t l = 0; l < 3; ++l) {
          const auto& idx = map.hidden[l];
          CHECK(idx.size() == slim_width(spec.hidden_widths[l], ratio));
          CHECK(std::adjacent_find(idx.begin(), idx.end(), std::greater_equal<>()) == idx.end());
          CHECK(idx.back() < spec.hidden_widths[l]);
        }
      }
}

TEST_CASE("sub-network forward equals the masked full network") {
  const ClassifierSpec spec{4, {6, 5}, 3};
  Rng rng(2);
  const ParameterSet global = init_classifier(spec, rng);
  const Tensor x = oracle::random_tensor({9, 4}, rng);
  for (auto scheme : kSchemes)
    for (double ratio : {0.5, 0.25, 0.0625})
      for (int t = 0; t < 6; ++t) {
        auto [sub, map] = extract_submodel(global, spec, ratio, scheme, t, 1, 4);
        const Tensor a = classifier_forward(sub, x);
        const Tensor b = classifier_forward(mask_to(global, spec, map), x);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
      }
}

TEST_CASE("selective averaging examples") {
  const ClassifierSpec spec{1, {1}, 1};
  ParameterSet global;
  global.insert("fc0.weight", Tensor::matrix({{9.0}}));
  global.insert("fc0.bias", Tensor::vector({9.0}));
  global.insert("fc1.weight", Tensor::matrix({{9.0}}));
  global.insert("fc1.bias", Tensor::vector({9.0}));
  ParameterSet two = global, four = global;
  for (auto& [n, t] : two) t.fill(2.0);
  for (auto& [n, t] : four) t.fill(4.0);
  const std::vector<ClientUpdate> updates = {{two, IndexMap::full(spec), 1.0}, {four, IndexMap::full(spec), 1.0}};
  const ParameterSet merged = aggregate(global, spec, updates);
  for (const auto& [n, t] : merged) CHECK(t[0] == 3.0);
  CHECK(aggregate(global, spec, std::vector<ClientUpdate>{}) == global);
}

TEST_CASE("untouched coordinates keep their values and denominators count holders only") {
  const ClassifierSpec spec{2, {4}, 2};
  Rng rng(3);
  const ParameterSet global = init_classifier(spec, rng);
  auto [sub_a, map_a] = extract_submodel(global, spec, 0.25, ExtractionScheme::kStatic, 0, 0, 1);   // node 0
  auto [sub_b, map_b] = extract_submodel(global, spec, 0.5, ExtractionScheme::kRolling, 1, 1, 1);  // nodes 1,2
  for (auto& [n, t] : sub_a) t.fill(1.0);
  for (auto& [n, t] : sub_b) t.fill(5.0);
  const std::vector<ClientUpdate> updates = {{sub_a, map_a, 2.0}, {sub_b, map_b, 3.0}};
  const ParameterSet merged = aggregate(global, spec, updates);
  const ParameterSet counts = update_counts(global, spec, updates);

  const Tensor& w0 = merged.at("fc0.weight");
  CHECK(w0.at(0, 0) == 1.0);
  CHECK(w0.at(1, 1) == 5.0);
  CHECK(w0.at(3, 0) == global.at("fc0.weight").at(3, 0));
  CHECK(merged.at("fc0.bias")[3] == global.at("fc0.bias")[3]);
  CHECK(counts.at("fc0.weight").at(0, 1) == 2.0);
  CHECK(counts.at("fc0.weight").at(2, 0) == 3.0);
  CHECK(counts.at("fc0.weight").at(3, 0) == 0.0);
  // Output biases are held by everyone: (2·1 + 3·5) / 5.
  CHECK(merged.at("fc1.bias")[0] == doctest::Approx(17.0 / 5.0).epsilon(1e-15));
  CHECK(counts.at("fc1.bias")[1] == 5.0);
  CHECK(merged.at("fc1.weight").at(0, 3) == global.at("fc1.weight").at(0, 3));
  CHECK(merged.at("fc1.weight").at(1, 2) == 5.0);
}

TEST_CASE("update counts equal the summed weight of clients holding each coordinate") {
  const ClassifierSpec spec{3, {8, 6}, 4};
  Rng rng(4);
  const ParameterSet global = init_classifier(spec, rng);
  std::vector<ClientUpdate> updates;
  const double ratios[] = {0.5, 0.25, 1.0, 0.125};
  for (int i = 0; i < 4; ++i) {
    auto [sub, map] = extract_submodel(global, spec, ratios[i], ExtractionScheme::kRandom, 5, i, 6);
    updates.push_back({sub, map, 1.0 + i});
  }
  const ParameterSet counts = update_counts(global, spec, updates);
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Tensor& c = counts.at(weight_name(l));
    for (std::size_t r = 0; r < c.dim(0); ++r)
      for (std::size_t col = 0; col < c.dim(1); ++col) {
        double expected = 0.0;
        for (const auto& u : updates) {
          const bool row_held = l + 1 == spec.num_layers() ||
                                std::binary_search(u.index_map.hidden[l].begin(), u.index_map.hidden[l].end(), r);
          const bool col_held =
              l == 0 || std::binary_search(u.index_map.hidden[l - 1].begin(), u.index_map.hidden[l - 1].end(), col);
          if (row_held && col_held) expected += u.weight;
        }
        CHECK(c.at(r, col) == expected);
      }
  }
}

TEST_CASE("full-width aggregation reduces to weighted averaging") {
  const ClassifierSpec spec{5, {7, 4}, 3};
  Rng rng(5);
  std::uniform_real_distribution<double> weight(0.1, 50.0);
  for (int trial = 0; trial < 25; ++trial) {
    const ParameterSet global = init_classifier(spec, rng);
    std::vector<ParameterSet> models;
    std::vector<double> weights;
    std::vector<ClientUpdate> updates;
    for (int i = 0; i < 4; ++i) {
      models.push_back(init_classifier(spec, rng));
      weights.push_back(weight(rng));
      updates.push_back({models.back(), IndexMap::full(spec), weights.back()});
    }
    const ParameterSet merged = aggregate(global, spec, updates);
    const ParameterSet expected = oracle::weighted_average(models, weights);
    for (const auto& [name, t] : merged)
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(t[i] - expected.at(name)[i]) <= 1e-12);
  }
}

TEST_CASE("aggregating a single unmodified sub-model is the identity") {
  const ClassifierSpec spec{3, {8, 5}, 2};
  Rng rng(6);
  const ParameterSet global = init_classifier(spec, rng);
  for (auto scheme : kSchemes)
    for (double ratio : {1.0, 0.5, 0.125}) {
      auto [sub, map] = extract_submodel(global, spec, ratio, scheme, 3, 0, 2);
      const std::vector<ClientUpdate> one = {{sub, map, 7.0}};
      const ParameterSet merged = aggregate(global, spec, one);
      for (const auto& [name, t] : merged)
        for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == doctest::Approx(global.at(name)[i]).epsilon(1e-15));
    }
}

TEST_CASE("aggregation rejects inconsistent updates") {
  const ClassifierSpec spec{3, {4}, 2};
  Rng rng(7);
  const ParameterSet global = init_classifier(spec, rng);
  auto [sub, map] = extract_submodel(global, spec, 0.5, ExtractionScheme::kStatic, 0, 0, 1);
  IndexMap out_of_range = map;
  out_of_range.hidden[0].back() = 4;
  CHECK_THROWS_AS(aggregate(global, spec, std::vector<ClientUpdate>{{sub, out_of_range, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(aggregate(global, spec, std::vector<ClientUpdate>{{global, map, 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(select_indices(spec, 0.0, ExtractionScheme::kStatic, 0, 0, 1), std::invalid_argument);
}

TEST_CASE("rolling windows cover each layer within K rounds") {
  const ClassifierSpec spec{3, {16, 5, 32}, 2};
  for (std::size_t l = 0; l < 3; ++l) {
    const std::size_t k = spec.hidden_widths[l];
    for (int offset : {0, 3, 17}) {
      std::set<std::size_t> seen;
      for (std::size_t t = 0; t < k; ++t) {
        const IndexMap map = select_indices(spec, 1.0 / static_cast<double>(k), ExtractionScheme::kRolling,
                                            offset + static_cast<int>(t), 0, 1);
        seen.insert(map.hidden[l].begin(), map.hidden[l].end());
      }
      CHECK(seen.size() == k);
    }
  }
}

TEST_CASE("random selections cover every index over many rounds") {
  const ClassifierSpec spec{3, {32, 16}, 2};
  std::vector<std::set<std::size_t>> seen(2);
  for (int t = 0; t < 200; ++t) {
    const IndexMap map = select_indices(spec, 0.0625, ExtractionScheme::kRandom, t, 3, 5);
    for (std::size_t l = 0; l < 2; ++l) seen[l].insert(map.hidden[l].begin(), map.hidden[l].end());
  }
  CHECK(seen[0].size() == 32);
  CHECK(seen[1].size() == 16);
}

TEST_CASE("index maps export as CSV") {
  IndexMap map{{{0, 3}, {1}}};
  std::ostringstream out;
  write_index_map_csv(out, map);
  CHECK(out.str() == "layer,index\n0,0\n0,3\n1,1\n");
  CHECK(parse_extraction_scheme("rolling") == ExtractionScheme::kRolling);
  CHECK_THROWS_AS(parse_extraction_scheme("sliding"), std::invalid_argument);
}
