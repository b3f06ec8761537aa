#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "hgrl/ad.hpp"
#include "hgrl/rng.hpp"

namespace hgrl {

// Named trainable tensors with deterministic iteration order. Frozen names
// stay in the store (they checkpoint) but receive no optimizer updates and
// no gradient leaves.
struct ParamStore {
  std::map<std::string, Mat> tensors;
  std::set<std::string> frozen;

  void add(const std::string& name, Mat value) {
    check_contract(tensors.emplace(name, std::move(value)).second, "duplicate parameter " + name);
  }

  Mat& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("unknown parameter " + name);
    return it->second;
  }

  const Mat& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("unknown parameter " + name);
    return it->second;
  }

  bool trainable(const std::string& name) const { return !frozen.count(name); }

  std::vector<std::string> names() const {
    std::vector<std::string> v;
    v.reserve(tensors.size());
    for (const auto& [k, _] : tensors) v.push_back(k);
    return v;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> v;
    for (const auto& [k, _] : tensors)
      if (!frozen.count(k)) v.push_back(k);
    return v;
  }
};

// Per-step view: every parameter becomes a tape leaf (gradient-bearing when
// trainable), so one backward pass fills all gradients.
struct LeafMap {
  std::map<std::string, ad::Var> vars;

  ad::Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("unknown leaf " + name);
    return it->second;
  }
};

inline LeafMap make_leafs(ad::Tape& tape, const ParamStore& params) {
  LeafMap m;
  for (const auto& [name, value] : params.tensors)
    m.vars.emplace(name, tape.leaf(value, params.trainable(name)));
  return m;
}

}  // namespace hgrl
