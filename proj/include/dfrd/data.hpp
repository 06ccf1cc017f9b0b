#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dfrd/tensor.hpp"

namespace dfrd {

/// Labeled samples with features in [−1,1].
struct Dataset {
  Tensor features;  // [n, D]
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.dim(1); }
  void validate() const;
};

/// Rows of `ds` at `indices`, in that order. Empty index lists are rejected.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);
/// Per-class sample counts.
std::vector<std::int64_t> label_histogram(const Dataset& ds);
std::vector<std::int64_t> label_histogram(const Dataset& ds, std::span<const std::size_t> indices);

/// Class c is drawn from N(center_c, spread²·I), clipped to [−1,1]. Centers
/// are uniform in [−0.7, 0.7]^dim. Samples are ordered by class.
Dataset make_blobs(std::size_t num_classes, std::size_t dim, std::size_t n_per_class, double spread,
                   std::uint64_t seed);

/// Splits a class-ordered dataset into the first `train_per_class` samples of
/// each class and the rest.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t train_per_class);

struct Partition {
  std::vector<std::vector<std::size_t>> client_indices;

  std::size_t num_clients() const { return client_indices.size(); }
};

/// Per class, q ~ Dir(ω·1_N) splits that class's (shuffled) samples across
/// clients with largest-remainder rounding, so every sample lands exactly once.
Partition dirichlet_partition(const Dataset& ds, std::size_t num_clients, double concentration, std::uint64_t seed);

/// Shuffled, near-equal shards (sizes differ by at most one).
Partition split_local_test(const Dataset& test, std::size_t num_clients, std::uint64_t seed);

/// Reads an IDX image/label file pair; pixels map from [0,255] to [−1,1].
/// Throws std::runtime_error on bad magic numbers, truncation or count mismatch.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CSV rows `client_id,sample_index`.
void write_partition_csv(std::ostream& out, const Partition& partition);

}  // namespace dfrd
