#include <doctest.h>

#include <numeric>

#include "dfrd/client.hpp"
#include "dfrd/heterofed.hpp"
#include "dfrd/models.hpp"
#include "oracles.hpp"

using namespace dfrd;

namespace {

struct Fixture {
  ClassifierSpec spec{4, {8}, 3};
  Dataset data = make_blobs(3, 4, 20, 0.2, 1);
  ParameterSet params;

  Fixture() {
    Rng rng(2);
    params = init_classifier(spec, rng);
  }
};

}  // namespace

TEST_CASE("zero local steps return the parameters untouched") {
  Fixture f;
  ClientConfig config;
  config.local_steps = 0;
  const ClientResult r = client_update(f.params, f.data, 3, config, 5);
  CHECK_FALSE(r.skipped);
  CHECK(r.params == f.params);
  CHECK(r.label_counts.counts == std::vector<std::int64_t>{0, 0, 0});
}

TEST_CASE("repeated draws of one sample are counted once") {
  Fixture f;
  const std::vector<std::size_t> one = {25};
  const Dataset single = subset(f.data, one);
  ClientConfig config;
  config.local_steps = 1;
  config.batch_size = 5;
  const ClientResult r = client_update(f.params, single, 3, config, 5);
  CHECK(r.label_counts.counts == std::vector<std::int64_t>{0, 1, 0});
  CHECK(r.label_counts.total() == 1);
}

TEST_CASE("touching every sample recovers the full label histogram") {
  Fixture f;
  const std::vector<std::size_t> idx = {0, 1, 2, 21, 22, 45};
  const Dataset shard = subset(f.data, idx);
  ClientConfig config;
  config.batch_size = 4;
  config.with_replacement = false;
  config.local_steps = 2;  // 8 draws from a reshuffled stream of 6 cover every sample
  CHECK(client_update(f.params, shard, 3, config, 9).label_counts.counts == label_histogram(shard));

  config.with_replacement = true;
  config.local_steps = 200;
  CHECK(client_update(f.params, shard, 3, config, 9).label_counts.counts == label_histogram(shard));
}

TEST_CASE("label counts never exceed the shard") {
  Fixture f;
  Rng rng(3);
  std::uniform_int_distribution<int> steps(0, 6), batch(1, 16);
  std::uniform_int_distribution<std::size_t> pick(0, f.data.size() - 1);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::size_t> idx(1 + trial % 17);
    for (auto& i : idx) i = pick(rng);
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    const Dataset shard = subset(f.data, idx);
    ClientConfig config;
    config.local_steps = steps(rng);
    config.batch_size = batch(rng);
    config.with_replacement = trial % 2 == 0;
    const ClientResult r = client_update(f.params, shard, 3, config, static_cast<std::uint64_t>(trial));
    CHECK(r.label_counts.total() <= static_cast<std::int64_t>(shard.size()));
    const auto hist = label_histogram(shard);
    for (std::size_t y = 0; y < 3; ++y) CHECK(r.label_counts.counts[y] <= hist[y]);
  }
}

TEST_CASE("empty shards are skipped") {
  Fixture f;
  Dataset empty;
  empty.num_classes = 3;
  const ClientResult r = client_update(f.params, empty, 3, ClientConfig{}, 1);
  CHECK(r.skipped);
  CHECK(r.params == f.params);
  CHECK(r.label_counts.total() == 0);
}

TEST_CASE("local training is deterministic per seed") {
  Fixture f;
  const ClientResult a = client_update(f.params, f.data, 3, ClientConfig{}, 4);
  const ClientResult b = client_update(f.params, f.data, 3, ClientConfig{}, 4);
  CHECK(a.params == b.params);
  CHECK(a.label_counts.counts == b.label_counts.counts);
  CHECK_FALSE(client_update(f.params, f.data, 3, ClientConfig{}, 5).params == a.params);
}

TEST_CASE("sub-models train in place of their slimmed layout") {
  Fixture f;
  auto [sub, map] = extract_submodel(f.params, f.spec, 0.25, ExtractionScheme::kRolling, 1, 0, 1);
  const ClientResult r = client_update(sub, f.data, 3, ClientConfig{}, 2);
  CHECK(r.params.same_layout(sub));
  CHECK_FALSE(r.params == sub);
}

TEST_CASE("small-step local training lowers the batch loss on blobs") {
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset data = make_blobs(3, 4, 30, 0.2, seed);
    Rng rng(seed + 100);
    const ParameterSet params = init_classifier(ClassifierSpec{4, {8}, 3}, rng);
    ClientConfig config;
    config.lr = 0.05;
    config.local_steps = 40;
    config.batch_size = 16;
    const ClientResult r = client_update(params, data, 3, config, seed);
    first += r.first_loss;
    last += r.last_loss;
  }
  CHECK(last < first);
}

TEST_CASE("invalid client settings are rejected") {
  Fixture f;
  ClientConfig config;
  config.batch_size = 0;
  CHECK_THROWS_AS(client_update(f.params, f.data, 3, config, 1), std::invalid_argument);
  config.batch_size = 4;
  config.local_steps = -1;
  CHECK_THROWS_AS(client_update(f.params, f.data, 3, config, 1), std::invalid_argument);
}
