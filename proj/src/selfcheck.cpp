#include "dfrd/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "dfrd/config.hpp"
#include "dfrd/distill.hpp"
#include "dfrd/heterofed.hpp"
#include "dfrd/models.hpp"
#include "dfrd/rng.hpp"

namespace dfrd {

double gradient_check(const std::function<Var(Graph&, const BoundParameters&)>& loss, const ParameterSet& params,
                      double step) {
  GradientMap analytic;
  {
    Graph g;
    BoundParameters bound(g, params, true);
    analytic = g.backward(loss(g, bound));
  }
  auto evaluate = [&](const ParameterSet& p) {
    Graph g;
    BoundParameters bound(g, p, false);
    return loss(g, bound).value().item();
  };

  double worst = 0.0;
  ParameterSet probe = params;
  for (auto& [name, tensor] : probe) {
    const Tensor& a = analytic.at(name);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + step;
      const double up = evaluate(probe);
      tensor[i] = orig - step;
      const double down = evaluate(probe);
      tensor[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      diff2 += (a[i] - numeric) * (a[i] - numeric);
      a2 += a[i] * a[i];
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

namespace {

CheckResult check(std::string name, bool passed, std::string detail = {}) {
  return CheckResult{std::move(name), passed, std::move(detail)};
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, scale);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

CheckResult gradients() {
  Rng rng(17);
  const std::size_t batch = 4, dim = 3, classes = 3;
  ParameterSet params;
  params.insert("s", random_tensor({batch, dim}, rng));
  params.insert("h", random_tensor({batch, dim}, rng));
  params.insert("student", random_tensor({batch, classes}, rng));
  params.insert("teacher", random_tensor({batch, classes}, rng));
  const std::vector<int> labels = {0, 1, 2, 1};
  const std::vector<std::uint8_t> gates = {1, 0, 1, 1};

  const double gen = gradient_check(
      [&](Graph&, const BoundParameters& p) {
        return loss_generator(p["student"], p["teacher"], p["s"], p["h"], labels, gates, GeneratorLossWeights{})
            .total;
      },
      params);
  const double md = gradient_check(
      [&](Graph&, const BoundParameters& p) {
        Var gs = p["student"], ts = p["teacher"], ge = p["s"], te = p["h"];
        return loss_distill(gs, ts, &ge, &te, 0.5).total;
      },
      params);
  const double worst = std::max(gen, md);
  return check("gradients of generator and distillation losses", worst <= 1e-4,
               fmt::format("max relative error {:.2e}", worst));
}

CheckResult fedavg_reduction() {
  const ClassifierSpec spec{3, {4, 3}, 2};
  Rng rng(5);
  const ParameterSet global = init_classifier(spec, rng);
  std::vector<ClientUpdate> updates;
  const std::vector<double> weights = {1.0, 3.0, 0.5};
  for (double w : weights) updates.push_back(ClientUpdate{init_classifier(spec, rng), IndexMap::full(spec), w});
  const ParameterSet merged = aggregate(global, spec, updates);
  const double total = weights[0] + weights[1] + weights[2];
  double worst = 0.0;
  for (const auto& [name, t] : merged) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      double direct = 0.0;
      for (const auto& u : updates) direct += u.weight * u.params.at(name)[i];
      worst = std::max(worst, std::abs(t[i] - direct / total));
    }
  }
  return check("full-width aggregation equals weighted averaging", worst <= 1e-12,
               fmt::format("max deviation {:.2e}", worst));
}

CheckResult budgets() {
  const std::vector<double> expected = {0.5, 0.25, 0.125, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625, 0.0625};
  return check("budget ratios for N=10, sigma=4, rho=10", assign_budgets(10, 4, 10).ratios == expected);
}

CheckResult rolling_coverage() {
  const ClassifierSpec spec{4, {16, 8}, 3};
  bool ok = true;
  for (std::size_t layer = 0; layer < spec.hidden_widths.size(); ++layer) {
    const std::size_t k = spec.hidden_widths[layer];
    std::set<std::size_t> seen;
    for (std::size_t t = 0; t < k; ++t) {
      const IndexMap map =
          select_indices(spec, 1.0 / static_cast<double>(k), ExtractionScheme::kRolling, static_cast<int>(t), 0, 1);
      seen.insert(map.hidden[layer].begin(), map.hidden[layer].end());
    }
    ok = ok && seen.size() == k;
  }
  return check("rolling windows cover every hidden node", ok);
}

CheckResult weight_sums() {
  Rng rng(3);
  std::uniform_int_distribution<int> count(0, 5);
  const std::size_t n = 4, c = 5;
  Tensor counts({n, c});
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = count(rng);
  const std::vector<std::size_t> active = {0, 1, 3};
  const WeightTable table = build_weight_table(counts, counts, active, WeightingVariant::kDynamic);
  double worst = 0.0;
  for (std::size_t y = 0; y < c; ++y) {
    double col = 0.0;
    for (auto i : active) col += table.tau.at(i, y);
    if (table.label_probs[y] > 0.0) worst = std::max(worst, std::abs(col - 1.0));
  }
  return check("dynamic weights sum to one per sampled label", worst <= 1e-12,
               fmt::format("max deviation {:.2e}", worst));
}

CheckResult gate_implications() {
  bool ok = true;
  for (int student = 0; student < 2; ++student) {
    for (int teacher = 0; teacher < 2; ++teacher) {
      for (int y = 0; y < 2; ++y) {
        const Tensor gl = Tensor::matrix({{student == 0 ? 1.0 : 0.0, student == 1 ? 1.0 : 0.0}});
        const Tensor en = Tensor::matrix({{teacher == 0 ? 1.0 : 0.0, teacher == 1 ? 1.0 : 0.0}});
        const std::vector<int> label = {y};
        const auto d = transfer_gate(gl, en, label, GateVariant::kDiamond)[0];
        const auto tr = transfer_gate(gl, en, label, GateVariant::kTriangle)[0];
        const auto na = transfer_gate(gl, en, label, GateVariant::kNabla)[0];
        ok = ok && (d == (student != y && teacher == y)) && tr == 1 && (na == (student != teacher));
        ok = ok && (!d || (tr && na));
      }
    }
  }
  return check("transfer gate truth table for two classes", ok);
}

CheckResult ema_identity() {
  Rng rng(9);
  ParameterSet w;
  w.insert("a", random_tensor({3, 2}, rng));
  const EmaGenerator start{zeros_like(w)};
  return check("EMA with zero momentum copies the generator", *ema_update(start, w, 0.0).weights == w);
}

CheckResult config_round_trip() {
  ExperimentConfig c;
  c.server.gate = GateVariant::kNabla;
  c.omega = 0.3;
  c.hidden = {7, 5};
  const ExperimentConfig back = parse_config(format_config(c));
  return check("config text round-trips", format_config(back) == format_config(c));
}

}  // namespace

std::vector<CheckResult> run_self_checks() {
  std::vector<CheckResult> results;
  for (auto* fn : {gradients, fedavg_reduction, budgets, rolling_coverage, weight_sums, gate_implications,
                   ema_identity, config_round_trip}) {
    try {
      results.push_back(fn());
    } catch (const std::exception& e) {
      results.push_back(check("check raised an exception", false, e.what()));
    }
  }
  return results;
}

}  // namespace dfrd
