#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "trtm/tensor/tensor.hpp"
#include "trtm/util/rng.hpp"

namespace trtm::ad {

// Named parameter tensors with stable iteration order; the order is the
// serialization and optimizer-state order.
template <typename Real>
class ParamSet {
 public:
  int add(const std::string& name, Tensor<Real> t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate param: " + name);
    t.requires_grad = true;
    index_[name] = static_cast<int>(items_.size());
    items_.push_back({name, std::move(t)});
    return static_cast<int>(items_.size()) - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Real>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown param: " + name);
    return items_[it->second].second;
  }
  const Tensor<Real>& at(const std::string& name) const {
    return const_cast<ParamSet*>(this)->at(name);
  }

  int size() const { return static_cast<int>(items_.size()); }
  const std::string& name(int i) const { return items_[i].first; }
  Tensor<Real>& tensor(int i) { return items_[i].second; }
  const Tensor<Real>& tensor(int i) const { return items_[i].second; }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.second.numel();
    return n;
  }

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> items_;
  std::unordered_map<std::string, int> index_;
};

// He-uniform initialization: bound sqrt(6 / fan_in). Seeded per tensor so
// the result does not depend on insertion order.
template <typename Real>
Tensor<Real> he_uniform(const std::vector<int>& shape, int fan_in,
                        uint64_t seed) {
  Tensor<Real> t(shape);
  util::Rng rng(seed);
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<Real>(rng.uniform(-bound, bound));
  return t;
}

template <typename Real>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<Real>> m, v;

  void init(const ParamSet<Real>& params) {
    step = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (int i = 0; i < params.size(); ++i) {
      m[i].assign(params.tensor(i).numel(), Real(0));
      v[i].assign(params.tensor(i).numel(), Real(0));
    }
  }
};

// One Adam update with bias correction. grads[i] aligns with params order.
template <typename Real>
void adam_step(ParamSet<Real>& params,
               const std::vector<std::vector<Real>>& grads,
               AdamState<Real>& state, Real lr, Real beta1 = Real(0.9),
               Real beta2 = Real(0.999), Real eps = Real(1e-8)) {
  if (static_cast<int>(grads.size()) != params.size() ||
      static_cast<int>(state.m.size()) != params.size())
    throw std::invalid_argument("adam_step: grads/state do not match params");
  state.step += 1;
  double t = static_cast<double>(state.step);
  Real corr1 = Real(1) - static_cast<Real>(std::pow(Real(beta1), t));
  Real corr2 = Real(1) - static_cast<Real>(std::pow(Real(beta2), t));
  for (int i = 0; i < params.size(); ++i) {
    auto& p = params.tensor(i).data;
    const auto& gvec = grads[i];
    if (gvec.size() != p.size())
      throw std::invalid_argument("adam_step: grad shape mismatch at " +
                                  params.name(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      Real g = gvec[j];
      m[j] = beta1 * m[j] + (Real(1) - beta1) * g;
      v[j] = beta2 * v[j] + (Real(1) - beta2) * g * g;
      Real mhat = m[j] / corr1;
      Real vhat = v[j] / corr2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

}  // namespace trtm::ad
