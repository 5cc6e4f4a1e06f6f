#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ifnet/autodiff/tape.hpp"
#include "ifnet/autodiff/tensor.hpp"
#include "ifnet/core/random.hpp"

namespace ifnet {

/// Named tensors in a fixed order (the order of creation).
template <class T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> value) {
    if (index_.count(name)) throw Error("duplicate parameter " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(std::move(name), std::move(value));
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor<T>& tensor(std::size_t i) { return entries_[i].second; }
  const Tensor<T>& tensor(std::size_t i) const { return entries_[i].second; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter " + name);
    return it->second;
  }
  Tensor<T>& operator[](const std::string& name) { return tensor(index_of(name)); }
  const Tensor<T>& operator[](const std::string& name) const { return tensor(index_of(name)); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  bool operator==(const ParamSet& o) const { return entries_ == o.entries_; }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [n, t] : entries_) out.add(n, tensor_cast<U>(t));
    return out;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters placed on a tape, addressed by name.
template <class T>
class BoundParams {
 public:
  BoundParams(ad::Tape<T>& tape, const ParamSet<T>& params, bool trainable) : params_(&params) {
    vars_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      vars_.push_back(trainable ? tape.variable(params.tensor(i)) : tape.constant(params.tensor(i)));
  }

  /// Wraps variables already on a tape, one per parameter in `params` order.
  BoundParams(const ParamSet<T>& params, std::vector<ad::Var<T>> vars) : params_(&params), vars_(std::move(vars)) {
    if (vars_.size() != params.size()) throw Error("BoundParams: variable count does not match the parameter set");
  }

  ad::Var<T> operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }
  ad::Var<T> at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

 private:
  const ParamSet<T>* params_;
  std::vector<ad::Var<T>> vars_;
};

/// He-uniform weights, U(+-1/sqrt(fan_in)) biases, drawn in order from one stream.
template <class T>
void init_layer(ParamSet<T>& p, const std::string& prefix, Shape weight_shape, std::size_t fan_in, Rng& rng) {
  const double wb = std::sqrt(6.0 / static_cast<double>(fan_in));
  const double bb = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor<T> w(weight_shape), b({weight_shape[0]});
  std::uniform_real_distribution<double> uw(-wb, wb), ub(-bb, bb);
  for (auto& v : w.values()) v = static_cast<T>(uw(rng));
  for (auto& v : b.values()) v = static_cast<T>(ub(rng));
  p.add(prefix + ".weight", std::move(w));
  p.add(prefix + ".bias", std::move(b));
}

}  // namespace ifnet
