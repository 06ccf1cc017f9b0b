#include "dfrd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include "dfrd/rng.hpp"

namespace dfrd {

void Dataset::validate() const {
  require(!labels.empty(), "dataset is empty");
  require(features.rank() == 2 && features.dim(0) == labels.size(), "features and labels disagree");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "label " + std::to_string(y) + " out of range");
  for (double v : features.data()) require(v >= -1.0 && v <= 1.0, "feature outside [-1,1]");
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  require(!indices.empty(), "subset needs at least one index");
  const std::size_t dim = ds.dim();
  Dataset out;
  out.num_classes = ds.num_classes;
  out.features = Tensor({indices.size(), dim});
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] < ds.size(), "subset index out of range");
    std::copy_n(ds.features.row(indices[r]).begin(), dim, out.features.row(r).begin());
    out.labels.push_back(ds.labels[indices[r]]);
  }
  return out;
}

std::vector<std::int64_t> label_histogram(const Dataset& ds) {
  std::vector<std::int64_t> counts(ds.num_classes, 0);
  for (int y : ds.labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<std::int64_t> label_histogram(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<std::int64_t> counts(ds.num_classes, 0);
  for (auto i : indices) ++counts[static_cast<std::size_t>(ds.labels.at(i))];
  return counts;
}

Dataset make_blobs(std::size_t num_classes, std::size_t dim, std::size_t n_per_class, double spread,
                   std::uint64_t seed) {
  require(num_classes >= 2, "make_blobs needs at least two classes");
  require(dim >= 2, "make_blobs needs at least two dimensions");
  require(n_per_class >= 1, "make_blobs needs at least one sample per class");
  require(spread >= 0.0, "spread must be non-negative");

  Rng center_rng = make_rng(seed, {0});
  Rng sample_rng = make_rng(seed, {1});
  std::uniform_real_distribution<double> unit(-0.7, 0.7);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor centers({num_classes, dim});
  for (auto& v : centers.data()) v = unit(center_rng);

  Dataset ds;
  ds.num_classes = num_classes;
  ds.features = Tensor({num_classes * n_per_class, dim});
  ds.labels.reserve(num_classes * n_per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < num_classes; ++c)
    for (std::size_t n = 0; n < n_per_class; ++n, ++row) {
      auto out = ds.features.row(row);
      for (std::size_t j = 0; j < dim; ++j) {
        const double noise = spread > 0.0 ? spread * normal(sample_rng) : 0.0;
        out[j] = std::clamp(centers.at(c, j) + noise, -1.0, 1.0);
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t train_per_class) {
  std::vector<std::size_t> seen(ds.num_classes, 0);
  std::vector<std::size_t> train, test;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& count = seen[static_cast<std::size_t>(ds.labels[i])];
    (count++ < train_per_class ? train : test).push_back(i);
  }
  require(!train.empty() && !test.empty(), "split leaves an empty side");
  return {subset(ds, train), subset(ds, test)};
}

namespace {

// Dir(ω·1_N) sample. Gamma draws are taken in log space: for shape < 1,
// Gamma(a) = Gamma(a+1)·U^(1/a), which keeps tiny concentrations from
// underflowing every component to zero.
std::vector<double> sample_dirichlet(std::size_t n, double concentration, Rng& rng) {
  std::vector<double> log_g(n);
  const bool boost = concentration < 1.0;
  std::gamma_distribution<double> gamma(boost ? concentration + 1.0 : concentration, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& lg : log_g) {
    lg = std::log(gamma(rng));
    if (boost) {
      double u = unit(rng);
      while (u <= 0.0) u = unit(rng);
      lg += std::log(u) / concentration;
    }
  }
  const double peak = *std::max_element(log_g.begin(), log_g.end());
  double total = 0.0;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = std::exp(log_g[i] - peak);
    total += q[i];
  }
  for (auto& v : q) v /= total;
  return q;
}

// Integer shares of `total` proportional to q; remainders go to the largest
// fractional parts, ties to the lower index.
std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& q) {
  std::vector<std::size_t> counts(q.size());
  std::vector<double> frac(q.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double exact = q[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[order[r % order.size()]];
  return counts;
}

}  // namespace

Partition dirichlet_partition(const Dataset& ds, std::size_t num_clients, double concentration, std::uint64_t seed) {
  require(num_clients >= 1, "need at least one client");
  require(concentration > 0.0, "Dirichlet concentration must be positive");
  Partition part;
  part.client_indices.resize(num_clients);

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    Rng rng = make_rng(seed, {c});
    auto& members = by_class[c];
    std::shuffle(members.begin(), members.end(), rng);
    const auto q = sample_dirichlet(num_clients, concentration, rng);
    const auto counts = largest_remainder(members.size(), q);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      auto& dst = part.client_indices[k];
      dst.insert(dst.end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                 members.begin() + static_cast<std::ptrdiff_t>(offset + counts[k]));
      offset += counts[k];
    }
  }
  for (auto& idx : part.client_indices) std::sort(idx.begin(), idx.end());
  return part;
}

Partition split_local_test(const Dataset& test, std::size_t num_clients, std::uint64_t seed) {
  require(num_clients >= 1, "need at least one client");
  require(num_clients <= test.size(), "more clients than test samples");
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Partition part;
  part.client_indices.resize(num_clients);
  const std::size_t base = test.size() / num_clients, extra = test.size() % num_clients;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < num_clients; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    part.client_indices[k].assign(order.begin() + static_cast<std::ptrdiff_t>(offset),
                                  order.begin() + static_cast<std::ptrdiff_t>(offset + len));
    offset += len;
  }
  return part;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& what) {
  if (bytes.size() < offset + 4) throw std::runtime_error(what + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);
  const std::string img_name = images.string(), lab_name = labels.string();

  if (read_be32(img, 0, img_name) != 0x00000803u) throw std::runtime_error(img_name + ": bad IDX image magic");
  if (read_be32(lab, 0, lab_name) != 0x00000801u) throw std::runtime_error(lab_name + ": bad IDX label magic");
  const std::size_t n = read_be32(img, 4, img_name);
  const std::size_t rows = read_be32(img, 8, img_name);
  const std::size_t cols = read_be32(img, 12, img_name);
  const std::size_t n_labels = read_be32(lab, 4, lab_name);
  if (n != n_labels) throw std::runtime_error("IDX image and label counts differ");
  if (n == 0 || rows * cols == 0) throw std::runtime_error(img_name + ": empty IDX payload");
  const std::size_t pixels = rows * cols;
  if (img.size() != 16 + n * pixels) throw std::runtime_error(img_name + ": payload length mismatch");
  if (lab.size() != 8 + n) throw std::runtime_error(lab_name + ": payload length mismatch");

  Dataset ds;
  ds.features = Tensor({n, pixels});
  for (std::size_t i = 0; i < n * pixels; ++i) ds.features[i] = static_cast<double>(img[16 + i]) / 127.5 - 1.0;
  ds.labels.resize(n);
  int max_label = 1;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

void write_partition_csv(std::ostream& out, const Partition& partition) {
  out << "client_id,sample_index\n";
  for (std::size_t k = 0; k < partition.num_clients(); ++k)
    for (auto i : partition.client_indices[k]) out << k << ',' << i << '\n';
}

}  // namespace dfrd
