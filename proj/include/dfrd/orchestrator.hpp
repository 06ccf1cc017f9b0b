#pragma once

// Communication-round loop, evaluation, and per-run artifacts.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfrd/config.hpp"
#include "dfrd/data.hpp"
#include "dfrd/distill.hpp"
#include "dfrd/heterofed.hpp"

namespace dfrd {

struct RoundRecord {
  int round = 0;
  double g_acc = 0.0;
  double l_acc = 0.0;
  double loss_fid = 0.0;
  double loss_tran = 0.0;
  double loss_div = 0.0;
  double loss_kl = 0.0;
  double loss_kl_ema = 0.0;
  double seconds = 0.0;
  bool skipped = false;
};

/// Fraction of samples whose argmax logit matches the label.
double evaluate_global(const ParameterSet& global, const Dataset& test);

/// Unweighted mean accuracy of each local model on its own test shard.
/// Clients with an empty shard are left out; 0 if none remain.
double evaluate_local(std::span<const LocalModel> locals, const Dataset& test, const Partition& test_shards);

class Simulation {
 public:
  /// Validates the config, then builds data, partitions, budgets and the
  /// initial global model and generator.
  explicit Simulation(ExperimentConfig config);

  /// Rounds count from 0.
  RoundRecord run_round(int round);

  const ExperimentConfig& config() const { return config_; }
  const ClassifierSpec& classifier_spec() const { return spec_; }
  const Dataset& train() const { return train_; }
  const Dataset& test() const { return test_; }
  const Partition& partition() const { return partition_; }
  const Partition& test_shards() const { return test_shards_; }
  const BudgetPlan& budgets() const { return budgets_; }
  const ParameterSet& global() const { return global_; }
  const GeneratorState& generator() const { return generator_; }
  const EmaGenerator& ema() const { return ema_; }
  /// Clients sampled in the most recent round.
  const std::vector<std::size_t>& last_active() const { return last_active_; }
  const std::vector<LocalModel>& last_locals() const { return last_locals_; }
  const Tensor& last_synthetic() const { return last_synthetic_; }
  const std::vector<int>& last_synthetic_labels() const { return last_synthetic_labels_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<std::size_t> sample_clients(int round) const;
  double ratio_for(std::size_t client) const;

  ExperimentConfig config_;
  ClassifierSpec spec_;
  Dataset train_;
  Dataset test_;
  Partition partition_;
  Partition test_shards_;
  BudgetPlan budgets_;
  Tensor shard_counts_;  // [N, C]
  std::vector<Dataset> local_train_;
  ParameterSet global_;
  GeneratorState generator_;
  EmaGenerator ema_;
  std::vector<std::size_t> last_active_;
  std::vector<LocalModel> last_locals_;
  Tensor last_synthetic_;
  std::vector<int> last_synthetic_labels_;
  std::vector<std::string> warnings_;
};

struct RunSummary {
  int top_round = 0;
  double top_g_acc = 0.0;
  double l_acc_at_top = 0.0;
};

struct ExperimentResult {
  std::vector<RoundRecord> records;
  RunSummary summary;
  std::vector<std::string> warnings;
  Tensor last_synthetic;
  std::vector<int> last_synthetic_labels;
};

/// Best G.acc over rounds (earliest round on ties) and the L.acc of that round.
RunSummary summarize(std::span<const RoundRecord> records);

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Mean and population standard deviation.
std::pair<double, double> mean_std(std::span<const double> values);

inline constexpr std::string_view kRecordCsvHeader =
    "round,g_acc,l_acc,loss_fid,loss_tran,loss_div,loss_kl,loss_kl_ema,seconds";

void write_records_csv(std::ostream& out, std::span<const RoundRecord> records);

/// Resolved config as key=value lines followed by the derived stream seeds as
/// comments. Feeding it back to parse_config() restores the config.
void write_manifest(std::ostream& out, const ExperimentConfig& config);

/// Synthetic samples as CSV with header `label,x0,x1,...`.
void write_synthetic_csv(std::ostream& out, const Tensor& samples, std::span<const int> labels);

}  // namespace dfrd
