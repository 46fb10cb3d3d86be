#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "maat/error.hpp"
#include "maat/tape.hpp"
#include "maat/tensor.hpp"

namespace maat {

// Named tensors in insertion order. Order is part of the checkpoint format
// and of the optimizer's state layout.
class ParamStore {
 public:
  void add(std::string name, Tensor value) {
    if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor& get(const std::string& name) const { return entries_[position(name)].second; }
  Tensor& get(const std::string& name) { return entries_[position(name)].second; }

  std::size_t position(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  const Tensor& at(std::size_t i) const { return entries_[i].second; }
  Tensor& at(std::size_t i) { return entries_[i].second; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// A ParamStore placed on a tape, either as differentiable leaves or as
// constants.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store, bool trainable) : store_(&store) {
    vars_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      vars_.push_back(trainable ? tape.variable(store.at(i)) : tape.constant(store.at(i)));
    }
  }

  // Binds already-recorded vars, in store order, under the store's names.
  BoundParams(const ParamStore& store, std::vector<Var> vars) : store_(&store), vars_(std::move(vars)) {
    if (vars_.size() != store.size()) throw ContractError("BoundParams: var count does not match store");
  }

  const Var& operator[](const std::string& name) const { return vars_[store_->position(name)]; }
  const Var& at(std::size_t i) const { return vars_[i]; }
  std::size_t size() const { return vars_.size(); }

  std::vector<Tensor> gradients(const Gradients& g) const {
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (const Var& v : vars_) out.push_back(g.of(v));
    return out;
  }

 private:
  const ParamStore* store_;
  std::vector<Var> vars_;
};

}  // namespace maat
