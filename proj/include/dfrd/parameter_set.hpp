#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dfrd/autodiff.hpp"
#include "dfrd/tensor.hpp"

namespace dfrd {

/// Ordered collection of named parameter tensors. Dense layers store
/// "<layer>.weight" as [out,in] and "<layer>.bias" as [out].
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void insert(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t num_values() const;
  bool same_layout(const ParameterSet& other) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Entry> entries_;
};

ParameterSet zeros_like(const ParameterSet& params);

/// Parameter leaves (or constants, when frozen) for every tensor in a set.
class BoundParameters {
 public:
  BoundParameters(Graph& graph, const ParameterSet& params, bool trainable);
  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }

 private:
  std::map<std::string, Var> vars_;
};

// Checkpoint format: u64 entry count, then per entry u32 name length, name
// bytes, u32 rank, u64 dims, and raw f64 values; all little-endian.
void write_checkpoint(std::ostream& out, const ParameterSet& params);
ParameterSet read_checkpoint(std::istream& in);

}  // namespace dfrd
