#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "dfrd/autodiff.hpp"
#include "dfrd/data.hpp"
#include "dfrd/optim.hpp"
#include "oracles.hpp"

using namespace dfrd;
namespace fs = std::filesystem;

namespace {

void put_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

fs::path write_file(const std::string& name, const std::string& bytes) {
  const fs::path p = fs::temp_directory_path() / ("dfrd_test_" + name);
  std::ofstream(p, std::ios::binary) << bytes;
  return p;
}

std::string idx_images(const std::vector<std::vector<unsigned char>>& images, std::uint32_t rows, std::uint32_t cols,
                       std::uint32_t magic = 0x803) {
  std::string out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(images.size()));
  put_be32(out, rows);
  put_be32(out, cols);
  for (const auto& img : images)
    for (auto px : img) out.push_back(static_cast<char>(px));
  return out;
}

std::string idx_labels(const std::vector<unsigned char>& labels, std::uint32_t magic = 0x801) {
  std::string out;
  put_be32(out, magic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (auto l : labels) out.push_back(static_cast<char>(l));
  return out;
}

double mean_label_entropy(const Dataset& ds, const Partition& part) {
  double total = 0.0;
  int counted = 0;
  for (const auto& idx : part.client_indices) {
    if (idx.empty()) continue;
    const auto hist = label_histogram(ds, idx);
    double h = 0.0;
    for (auto c : hist) {
      if (c == 0) continue;
      const double p = static_cast<double>(c) / static_cast<double>(idx.size());
      h -= p * std::log(p);
    }
    total += h;
    ++counted;
  }
  return total / counted;
}

void check_exact_cover(const Partition& part, std::size_t n, bool sorted = true) {
  std::vector<int> seen(n, 0);
  for (const auto& idx : part.client_indices) {
    if (sorted) CHECK(std::is_sorted(idx.begin(), idx.end()));
    for (auto i : idx) {
      REQUIRE(i < n);
      ++seen[i];
    }
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

}  // namespace

TEST_CASE("blobs counting and determinism") {
  const Dataset ds = make_blobs(2, 3, 5, 0.3, 42);
  CHECK(ds.size() == 10);
  CHECK(ds.labels == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
  CHECK(ds.num_classes == 2);
  for (double v : ds.features.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(make_blobs(2, 3, 5, 0.3, 42).features == ds.features);
  CHECK_FALSE(make_blobs(2, 3, 5, 0.3, 43).features == ds.features);
  CHECK_THROWS_AS(make_blobs(1, 3, 5, 0.3, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_blobs(2, 1, 5, 0.3, 1), std::invalid_argument);
}

TEST_CASE("zero spread puts every sample on its class center") {
  const Dataset ds = make_blobs(3, 4, 6, 0.0, 7);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const std::size_t first = static_cast<std::size_t>(ds.labels[r]) * 6;
    CHECK(std::equal(ds.features.row(r).begin(), ds.features.row(r).end(), ds.features.row(first).begin()));
  }
  CHECK_FALSE(std::equal(ds.features.row(0).begin(), ds.features.row(0).end(), ds.features.row(6).begin()));
}

TEST_CASE("a linear classifier separates well-spread blobs perfectly") {
  const Dataset ds = make_blobs(3, 4, 40, 0.05, 11);
  ParameterSet p;
  p.insert("w", Tensor({3, 4}));
  p.insert("b", Tensor({3}));
  for (int step = 0; step < 300; ++step) {
    Graph g;
    BoundParameters bound(g, p, true);
    Var loss = cross_entropy(linear(g.constant(ds.features), bound["w"], bound["b"]), ds.labels);
    p = sgd_step(std::move(p), g.backward(loss), 1.0);
  }
  Graph g;
  BoundParameters bound(g, p, false);
  const Tensor logits = linear(g.constant(ds.features), bound["w"], bound["b"]).value();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ds.size(); ++r) {
    const auto row = logits.row(r);
    hits += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) ==
            static_cast<std::size_t>(ds.labels[r]);
  }
  CHECK(hits == ds.size());
}

TEST_CASE("per-class split keeps the first samples of each class for training") {
  const Dataset ds = make_blobs(3, 2, 10, 0.2, 5);
  const auto [train, test] = split_per_class(ds, 7);
  CHECK(train.size() == 21);
  CHECK(test.size() == 9);
  CHECK(label_histogram(train) == std::vector<std::int64_t>{7, 7, 7});
  CHECK(label_histogram(test) == std::vector<std::int64_t>{3, 3, 3});
  CHECK(std::equal(train.features.row(7).begin(), train.features.row(7).end(), ds.features.row(10).begin()));
}

TEST_CASE("single-client partition receives everything") {
  const Dataset ds = make_blobs(4, 2, 25, 0.3, 1);
  const Partition part = dirichlet_partition(ds, 1, 0.1, 3);
  REQUIRE(part.num_clients() == 1);
  CHECK(part.client_indices[0].size() == ds.size());
  check_exact_cover(part, ds.size());
}

TEST_CASE("dirichlet partitions cover every sample exactly once and conserve class totals") {
  const Dataset ds = make_blobs(5, 2, 37, 0.3, 2);
  for (double omega : {0.01, 0.1, 1.0, 100.0}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Partition part = dirichlet_partition(ds, 7, omega, seed);
      check_exact_cover(part, ds.size());
      std::vector<std::int64_t> totals(5, 0);
      for (const auto& idx : part.client_indices)
        if (!idx.empty()) {
          const auto h = label_histogram(ds, idx);
          for (std::size_t c = 0; c < 5; ++c) totals[c] += h[c];
        }
      CHECK(totals == label_histogram(ds));
      CHECK(dirichlet_partition(ds, 7, omega, seed).client_indices == part.client_indices);
    }
  }
}

TEST_CASE("very large concentration splits every class near-uniformly") {
  const Dataset ds = make_blobs(4, 2, 250, 0.3, 3);
  const Partition part = dirichlet_partition(ds, 5, 1e6, 9);
  for (const auto& idx : part.client_indices) {
    REQUIRE_FALSE(idx.empty());
    const auto h = label_histogram(ds, idx);
    for (auto c : h) CHECK(std::abs(static_cast<double>(c) / static_cast<double>(idx.size()) - 0.25) <= 0.05);
  }
}

TEST_CASE("small concentration concentrates labels and ordering is monotone in omega") {
  const Dataset ds = make_blobs(10, 2, 100, 0.3, 4);
  std::vector<double> entropy;
  for (double omega : {1e6, 1.0, 0.1, 0.01}) {
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed)
      sum += mean_label_entropy(ds, dirichlet_partition(ds, 10, omega, seed));
    entropy.push_back(sum / 10.0);
  }
  CHECK(entropy[3] < 1.0);
  for (std::size_t i = 1; i < entropy.size(); ++i) CHECK(entropy[i] < entropy[i - 1]);
}

TEST_CASE("local test shards") {
  const Dataset ds = make_blobs(2, 2, 5, 0.3, 5);
  const Partition ten = split_local_test(ds, 10, 1);
  for (const auto& s : ten.client_indices) CHECK(s.size() == 1);
  check_exact_cover(ten, 10, false);

  const Partition three = split_local_test(ds, 3, 1);
  std::vector<std::size_t> sizes;
  for (const auto& s : three.client_indices) sizes.push_back(s.size());
  CHECK(sizes == std::vector<std::size_t>{4, 3, 3});
  check_exact_cover(three, 10, false);
  CHECK(split_local_test(ds, 3, 1).client_indices == three.client_indices);
  CHECK_THROWS_AS(split_local_test(ds, 11, 1), std::invalid_argument);
}

TEST_CASE("IDX loading") {
  const fs::path images = write_file("img.idx", idx_images({{0, 255, 51, 204}, {128, 0, 0, 255}}, 2, 2));
  const fs::path labels = write_file("lab.idx", idx_labels({3, 1}));
  const Dataset ds = load_idx(images, labels);
  CHECK(ds.size() == 2);
  CHECK(ds.dim() == 4);
  CHECK(ds.labels == std::vector<int>{3, 1});
  CHECK(ds.num_classes == 4);
  CHECK(ds.features.at(0, 0) == -1.0);
  CHECK(ds.features.at(0, 1) == 1.0);
  CHECK(ds.features.at(0, 2) == doctest::Approx(51 / 127.5 - 1.0).epsilon(1e-15));
  CHECK(ds.features.at(1, 0) == doctest::Approx(128 / 127.5 - 1.0).epsilon(1e-15));

  const std::string full = idx_images({{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2);
  const fs::path truncated = write_file("trunc.idx", full.substr(0, full.size() - 1));
  CHECK_THROWS_AS(load_idx(truncated, labels), std::runtime_error);
  const fs::path bad_magic = write_file("magic.idx", idx_images({{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2, 0x801));
  CHECK_THROWS_AS(load_idx(bad_magic, labels), std::runtime_error);
  const fs::path bad_labels = write_file("labmagic.idx", idx_labels({3, 1}, 0x803));
  CHECK_THROWS_AS(load_idx(images, bad_labels), std::runtime_error);
  const fs::path short_labels = write_file("labshort.idx", idx_labels({3}));
  CHECK_THROWS_AS(load_idx(images, short_labels), std::runtime_error);
  CHECK_THROWS_AS(load_idx(fs::temp_directory_path() / "dfrd_missing.idx", labels), std::runtime_error);
}

TEST_CASE("partition CSV export") {
  Partition part{{{0, 2}, {}, {1}}};
  std::ostringstream out;
  write_partition_csv(out, part);
  CHECK(out.str() == "client_id,sample_index\n0,0\n0,2\n2,1\n");
}

TEST_CASE("subset rejects empty and out-of-range selections") {
  const Dataset ds = make_blobs(2, 2, 3, 0.3, 6);
  CHECK_THROWS_AS(subset(ds, std::vector<std::size_t>{}), std::invalid_argument);
  CHECK_THROWS_AS(subset(ds, std::vector<std::size_t>{6}), std::invalid_argument);
  const std::vector<std::size_t> pick = {5, 0};
  const Dataset s = subset(ds, pick);
  CHECK(s.labels == std::vector<int>{1, 0});
}
