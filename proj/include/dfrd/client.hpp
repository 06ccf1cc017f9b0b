#pragma once

#include <cstdint>
#include <vector>

#include "dfrd/data.hpp"
#include "dfrd/parameter_set.hpp"

namespace dfrd {

/// Distinct training samples touched during local training, per label.
struct LabelCounter {
  std::vector<std::int64_t> counts;

  std::int64_t total() const;
};

struct ClientConfig {
  double lr = 0.1;
  int local_steps = 20;
  int batch_size = 64;
  /// Batches drawn with replacement; otherwise from a reshuffled sample stream.
  bool with_replacement = true;
};

struct ClientResult {
  ParameterSet params;
  LabelCounter label_counts;
  /// True when the shard was empty and nothing was trained.
  bool skipped = false;
  /// Batch losses of the first and last local step (0 when no step ran).
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Local SGD on cross-entropy. `local_train` may be empty, in which case the
/// result is flagged as skipped and carries the input parameters unchanged.
ClientResult client_update(const ParameterSet& sub, const Dataset& local_train, std::size_t num_classes,
                           const ClientConfig& config, std::uint64_t seed);

}  // namespace dfrd
