// SPDX-License-Identifier: Apache-2.0
/**
 * @file   params.hpp
 * @brief  Named trainable parameters with gradients, and Xavier initialisation.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <dyslat/error.hpp>
#include <dyslat/neural/tensor.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::nn {

class ParamStore {
public:
  struct Entry {
    Tensor value;
    Tensor grad;
  };

  void add(const std::string &name, Tensor value) {
    require(!entries_.contains(name), ErrorCode::BadConfig,
            "duplicate parameter '" + name + "'");
    Tensor grad = Tensor::zeros_like(value);
    entries_.emplace(name, Entry{std::move(value), std::move(grad)});
  }

  bool contains(const std::string &name) const {
    return entries_.contains(name);
  }

  const Tensor &value(const std::string &name) const { return entry(name).value; }
  Tensor &value(const std::string &name) { return entry(name).value; }
  const Tensor &grad(const std::string &name) const { return entry(name).grad; }
  Tensor &grad(const std::string &name) { return entry(name).grad; }

  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto &[_, e] : entries_)
      n += e.value.size();
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto &[name, _] : entries_)
      out.push_back(name);
    return out;
  }

  void zero_grad() {
    for (auto &[_, e] : entries_)
      e.grad.vec().setZero();
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Parameter values only; gradients are not part of equality.
  friend bool operator==(const ParamStore &a, const ParamStore &b) {
    if (a.entries_.size() != b.entries_.size())
      return false;
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin();
         ia != a.entries_.end(); ++ia, ++ib)
      if (ia->first != ib->first || !(ia->second.value == ib->second.value))
        return false;
    return true;
  }

private:
  Entry &entry(const std::string &name) {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::BadConfig,
            "unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry &entry(const std::string &name) const {
    auto it = entries_.find(name);
    require(it != entries_.end(), ErrorCode::BadConfig,
            "unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

/// Fan-in and fan-out following the convention of dense [out x in] weights;
/// trailing dimensions (convolution kernels) count as receptive field.
inline std::pair<double, double> fans(const Shape &shape) {
  if (shape.size() == 1)
    return {static_cast<double>(shape[0]), static_cast<double>(shape[0])};
  double receptive = 1.0;
  for (std::size_t i = 2; i < shape.size(); ++i)
    receptive *= static_cast<double>(shape[i]);
  return {static_cast<double>(shape[1]) * receptive,
          static_cast<double>(shape[0]) * receptive};
}

/// Uniform draws in [-b, b] with b = magnitude * sqrt(6 / (fan_in + fan_out)).
inline Tensor xavier_init(const Shape &shape, double magnitude,
                          std::uint64_t seed) {
  require(!shape.empty() && shape_size(shape) > 0, ErrorCode::ShapeMismatch,
          "xavier_init needs a non-empty shape");
  require(magnitude > 0.0, ErrorCode::BadConfig,
          "xavier magnitude must be positive");
  const auto [fan_in, fan_out] = fans(shape);
  const double bound = magnitude * std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(shape);
  Rng rng(seed);
  for (double &v : t.data())
    v = rng.uniform(-bound, bound);
  return t;
}

} // namespace dyslat::nn
