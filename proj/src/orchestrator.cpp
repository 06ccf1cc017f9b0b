#include "dfrd/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "dfrd/client.hpp"
#include "dfrd/rng.hpp"

namespace dfrd {

namespace {

double accuracy(const ParameterSet& params, const Dataset& ds) {
  if (ds.size() == 0) return 0.0;
  const Tensor logits = classifier_forward(params, ds.features);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ds.size(); ++r)
    if (argmax(logits.row(r)) == ds.labels[r]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

Dataset empty_like(const Dataset& ds) {
  Dataset out;
  out.num_classes = ds.num_classes;
  return out;
}

Dataset local_subset(const Dataset& ds, std::span<const std::size_t> indices) {
  return indices.empty() ? empty_like(ds) : subset(ds, indices);
}

ExtractionScheme extraction_for(FederationScheme scheme) {
  switch (scheme) {
    case FederationScheme::kStatic: return ExtractionScheme::kStatic;
    case FederationScheme::kRandom: return ExtractionScheme::kRandom;
    default: return ExtractionScheme::kRolling;  // with R = 1 every scheme keeps the full model
  }
}

std::pair<Dataset, Dataset> build_data(ExperimentConfig& config) {
  if (config.data_source == "idx") {
    Dataset train = load_idx(config.idx_train_images, config.idx_train_labels);
    Dataset test = load_idx(config.idx_test_images, config.idx_test_labels);
    require(train.dim() == test.dim(), "train and test feature dimensions differ");
    const std::size_t classes = std::max(train.num_classes, test.num_classes);
    train.num_classes = test.num_classes = classes;
    config.classes = classes;
    config.dim = train.dim();
    return {std::move(train), std::move(test)};
  }
  const Dataset all = make_blobs(config.classes, config.dim, config.train_per_class + config.test_per_class,
                                 config.spread, derive_seed(config.seed, {stream::kData}));
  return split_per_class(all, config.train_per_class);
}

}  // namespace

double evaluate_global(const ParameterSet& global, const Dataset& test) { return accuracy(global, test); }

double evaluate_local(std::span<const LocalModel> locals, const Dataset& test, const Partition& test_shards) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& local : locals) {
    require(local.client < test_shards.num_clients(), "local model refers to an unknown client");
    const auto& idx = test_shards.client_indices[local.client];
    if (idx.empty()) continue;
    total += accuracy(local.params, subset(test, idx));
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

Simulation::Simulation(ExperimentConfig config) : config_(std::move(config)) {
  config_.validate();
  auto [train, test] = build_data(config_);
  train_ = std::move(train);
  test_ = std::move(test);
  spec_ = config_.classifier_spec();
  spec_.validate();

  const auto n = static_cast<std::size_t>(config_.clients);
  const std::uint64_t seed = config_.seed;
  partition_ = dirichlet_partition(train_, n, config_.omega, derive_seed(seed, {stream::kPartition}));
  test_shards_ = split_local_test(test_, n, derive_seed(seed, {stream::kTestSplit}));
  budgets_ = assign_budgets(config_.clients, config_.sigma, config_.rho);

  shard_counts_ = Tensor::zeros({n, spec_.num_classes});
  for (std::size_t i = 0; i < n; ++i) {
    local_train_.push_back(local_subset(train_, partition_.client_indices[i]));
    for (int label : local_train_.back().labels) shard_counts_.at(i, static_cast<std::size_t>(label)) += 1.0;
  }

  Rng init_rng = make_rng(seed, {stream::kGlobalInit});
  global_ = init_classifier(spec_, init_rng);
  Rng gen_rng = make_rng(seed, {stream::kGeneratorInit});
  generator_ = init_generator(config_.generator_spec(), gen_rng);
}

std::vector<std::size_t> Simulation::sample_clients(int round) const {
  const auto n = static_cast<std::size_t>(config_.clients);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (config_.active == config_.clients) return all;
  Rng rng = make_rng(config_.seed, {stream::kClientSampling, static_cast<std::uint64_t>(round)});
  std::vector<std::size_t> chosen;
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), static_cast<std::size_t>(config_.active), rng);
  return chosen;
}

double Simulation::ratio_for(std::size_t client) const {
  return config_.scheme == FederationScheme::kFedAvg ? 1.0 : budgets_.ratios[client];
}

RoundRecord Simulation::run_round(int round) {
  require(round >= 0, "round index must be non-negative");
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t seed = config_.seed;
  const auto t = static_cast<std::uint64_t>(round);
  RoundRecord record;
  record.round = round;

  last_active_ = sample_clients(round);
  last_locals_.clear();
  std::vector<ClientUpdate> updates;
  Tensor round_counts = Tensor::zeros({static_cast<std::size_t>(config_.clients), spec_.num_classes});
  std::vector<std::size_t> trained;

  const std::uint64_t extraction_seed = derive_seed(seed, {stream::kExtraction});
  for (std::size_t client : last_active_) {
    auto [sub, map] = extract_submodel(global_, spec_, ratio_for(client), extraction_for(config_.scheme), round,
                                       static_cast<int>(client), extraction_seed);
    ClientResult res = client_update(sub, local_train_[client], spec_.num_classes, config_.client,
                                     derive_seed(seed, {stream::kClientTraining, t, client}));
    if (res.skipped) continue;
    for (std::size_t c = 0; c < spec_.num_classes; ++c)
      round_counts.at(client, c) = static_cast<double>(res.label_counts.counts[c]);
    trained.push_back(client);
    last_locals_.push_back(LocalModel{client, res.params});
    updates.push_back(ClientUpdate{std::move(res.params), std::move(map),
                                   static_cast<double>(local_train_[client].size())});
  }

  if (updates.empty()) {
    warnings_.push_back(fmt::format("round {}: every sampled client has an empty shard; round skipped", round));
    record.skipped = true;
  } else {
    if (config_.mode == DistillMode::kFineTune) {
      global_ = aggregate(global_, spec_, updates);
    } else if (config_.reinit == ReinitPolicy::kEveryRound) {
      Rng rng = make_rng(seed, {stream::kReinit, t});
      global_ = init_classifier(spec_, rng);
    }

    if (config_.distiller == Distiller::kDfrd) {
      const WeightTable table = build_weight_table(round_counts, shard_counts_, trained, config_.weighting);
      if (!table.can_sample()) {
        warnings_.push_back(fmt::format("round {}: no labels available for synthesis; distillation skipped", round));
      } else {
        const EmaGenerator no_ema;
        ServerResult res = server_update(last_locals_, std::move(global_), std::move(generator_),
                                         config_.ema ? ema_ : no_ema, table, config_.server,
                                         derive_seed(seed, {stream::kServer, t}));
        global_ = std::move(res.global);
        generator_ = std::move(res.generator);
        if (config_.ema) ema_ = ema_update(ema_, generator_.params, config_.lambda);
        record.loss_fid = res.stats.loss_fid;
        record.loss_tran = res.stats.loss_tran;
        record.loss_div = res.stats.loss_div;
        record.loss_kl = res.stats.loss_kl;
        record.loss_kl_ema = res.stats.loss_kl_ema;
        last_synthetic_ = std::move(res.last_synthetic);
        last_synthetic_labels_ = std::move(res.last_labels);
      }
    }
  }

  record.g_acc = evaluate_global(global_, test_);
  record.l_acc = evaluate_local(last_locals_, test_, test_shards_);
  if (config_.wall_time)
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return record;
}

RunSummary summarize(std::span<const RoundRecord> records) {
  RunSummary summary;
  bool first = true;
  for (const auto& r : records) {
    if (first || r.g_acc > summary.top_g_acc) {
      summary = RunSummary{r.round, r.g_acc, r.l_acc};
      first = false;
    }
  }
  return summary;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  Simulation sim(config);
  ExperimentResult result;
  for (int t = 0; t < sim.config().rounds; ++t) result.records.push_back(sim.run_round(t));
  result.summary = summarize(result.records);
  result.warnings = sim.warnings();
  result.last_synthetic = sim.last_synthetic();
  result.last_synthetic_labels = sim.last_synthetic_labels();
  return result;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  require(!values.empty(), "mean_std needs at least one value");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / n)};
}

void write_records_csv(std::ostream& out, std::span<const RoundRecord> records) {
  out << kRecordCsvHeader << '\n';
  for (const auto& r : records) {
    fmt::print(out, "{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.3f}\n", r.round, r.g_acc, r.l_acc,
               r.loss_fid, r.loss_tran, r.loss_div, r.loss_kl, r.loss_kl_ema, r.seconds);
  }
}

void write_manifest(std::ostream& out, const ExperimentConfig& config) {
  out << format_config(config);
  const std::uint64_t s = config.seed;
  out << "# seed hierarchy: derive_seed(run.seed, path), splitmix64 per path element\n";
  fmt::print(out, "# data            [{}]        = {}\n", stream::kData, derive_seed(s, {stream::kData}));
  fmt::print(out, "# partition       [{}]        = {}\n", stream::kPartition, derive_seed(s, {stream::kPartition}));
  fmt::print(out, "# test_split      [{}]        = {}\n", stream::kTestSplit, derive_seed(s, {stream::kTestSplit}));
  fmt::print(out, "# global_init     [{}]        = {}\n", stream::kGlobalInit, derive_seed(s, {stream::kGlobalInit}));
  fmt::print(out, "# generator_init  [{}]        = {}\n", stream::kGeneratorInit,
             derive_seed(s, {stream::kGeneratorInit}));
  fmt::print(out, "# extraction      [{}]        -> (round, client, layer)\n", stream::kExtraction);
  fmt::print(out, "# client_sampling [{}, round]\n", stream::kClientSampling);
  fmt::print(out, "# client_training [{}, round, client]\n", stream::kClientTraining);
  fmt::print(out, "# server          [{}, round]\n", stream::kServer);
  fmt::print(out, "# reinit          [{}, round]\n", stream::kReinit);
}

void write_synthetic_csv(std::ostream& out, const Tensor& samples, std::span<const int> labels) {
  if (labels.empty()) return;
  require(samples.rank() == 2 && samples.dim(0) == labels.size(), "synthetic samples and labels disagree");
  out << "label";
  for (std::size_t d = 0; d < samples.dim(1); ++d) out << ",x" << d;
  out << '\n';
  for (std::size_t r = 0; r < labels.size(); ++r) {
    out << labels[r];
    for (double v : samples.row(r)) fmt::print(out, ",{:.6f}", v);
    out << '\n';
  }
}

}  // namespace dfrd
