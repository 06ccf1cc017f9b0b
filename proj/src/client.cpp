#include "dfrd/client.hpp"

#include <algorithm>
#include <numeric>

#include "dfrd/models.hpp"
#include "dfrd/optim.hpp"
#include "dfrd/rng.hpp"

namespace dfrd {

std::int64_t LabelCounter::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

ClientResult client_update(const ParameterSet& sub, const Dataset& local_train, std::size_t num_classes,
                           const ClientConfig& config, std::uint64_t seed) {
  require(config.batch_size >= 1, "batch size must be at least 1");
  require(config.local_steps >= 0, "local step count must be non-negative");

  ClientResult result;
  result.params = sub;
  result.label_counts.counts.assign(num_classes, 0);
  const std::size_t n = local_train.labels.size();
  if (n == 0) {
    result.skipped = true;
    return result;
  }

  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> stream(n);
  std::iota(stream.begin(), stream.end(), 0);
  std::size_t cursor = n;  // forces a shuffle on first use

  std::vector<char> cached(n, 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t depth = classifier_depth(sub);
  std::vector<std::size_t> rows(batch);

  for (int step = 0; step < config.local_steps; ++step) {
    for (auto& r : rows) {
      if (config.with_replacement) {
        r = pick(rng);
      } else {
        if (cursor == n) {
          std::shuffle(stream.begin(), stream.end(), rng);
          cursor = 0;
        }
        r = stream[cursor++];
      }
    }
    const Dataset mini = subset(local_train, rows);

    Graph g;
    BoundParameters bound(g, result.params, true);
    Var loss = cross_entropy(classifier_logits(bound, depth, g.constant(mini.features)), mini.labels);
    const double value = loss.value().item();
    if (step == 0) result.first_loss = value;
    result.last_loss = value;
    result.params = sgd_step(std::move(result.params), g.backward(loss), config.lr);

    for (auto r : rows) {
      if (cached[r]) continue;
      cached[r] = 1;
      ++result.label_counts.counts[static_cast<std::size_t>(local_train.labels[r])];
    }
  }
  return result;
}

}  // namespace dfrd
