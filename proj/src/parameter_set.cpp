#include "dfrd/parameter_set.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace dfrd {

void ParameterSet::insert(std::string name, Tensor value) {
  require(!contains(name), "duplicate parameter '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

Tensor& ParameterSet::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.first == name) return e.second;
  throw std::invalid_argument("unknown parameter '" + name + "'");
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.first == name) return e.second;
  throw std::invalid_argument("unknown parameter '" + name + "'");
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first != other.entries_[i].first || !entries_[i].second.same_shape(other.entries_[i].second))
      return false;
  return true;
}

ParameterSet zeros_like(const ParameterSet& params) {
  ParameterSet out;
  for (const auto& [name, t] : params) out.insert(name, Tensor(t.shape()));
  return out;
}

BoundParameters::BoundParameters(Graph& graph, const ParameterSet& params, bool trainable) {
  for (const auto& [name, t] : params) vars_.emplace(name, trainable ? graph.parameter(name, t) : graph.constant(t));
}

Var BoundParameters::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  require(it != vars_.end(), "parameter '" + name + "' is not bound");
  return it->second;
}

// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ParameterSet& params) {
  put<std::uint64_t>(out, params.size());
  for (const auto& [name, t] : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

ParameterSet read_checkpoint(std::istream& in) {
  ParameterSet params;
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    std::vector<double> data(shape_size(shape));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated checkpoint");
    params.insert(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace dfrd
