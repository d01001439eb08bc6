#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "corrkg/autograd.hpp"
#include "corrkg/tensor.hpp"

namespace corrkg {

/// A learned tensor with its gradient accumulator and Adam moments.
template <class T>
struct Param {
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;

  explicit Param(Tensor<T> init)
      : value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

template <class T>
class ParamStore {
 public:
  using Map = std::map<std::string, Param<T>>;

  Param<T>& add(const std::string& name, Tensor<T> value) {
    auto [it, inserted] = params_.try_emplace(name, std::move(value));
    if (!inserted) throw std::invalid_argument("param store: duplicate name '" + name + "'");
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Param<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("param store: no parameter '" + name + "'");
    return it->second;
  }
  const Param<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("param store: no parameter '" + name + "'");
    return it->second;
  }

  /// Binds a parameter to a tape. On a recording tape the leaf feeds
  /// gradients back into this store.
  Var<T> bind(Tape<T>& tape, const std::string& name) {
    Param<T>& p = at(name);
    return tape.leaf(p.value, &p.grad);
  }
  Var<T> bind(Tape<T>& tape, const std::string& name) const {
    if (tape.recording()) throw std::logic_error("param store: const store bound to recording tape");
    return tape.leaf(at(name).value, nullptr);
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(T{0});
  }

  double grad_norm() const {
    double acc = 0;
    for (const auto& [_, p] : params_)
      for (T g : p.grad.values()) acc += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(acc);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t s) { step_ = s; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  Map params_;
  std::uint64_t step_ = 0;
};

/// Uniform [-0.1, 0.1] initialization, drawn in declaration order from one
/// mt19937_64 stream so a seed fully determines the store.
template <class T>
ParamStore<T> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed,
                          double range = 0.1) {
  ParamStore<T> store;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  for (const auto& spec : specs) {
    Tensor<T> t(spec.shape);
    for (T& x : t.values()) x = static_cast<T>(dist(rng));
    store.add(spec.name, std::move(t));
  }
  return store;
}

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Increments the step counter and clears gradients.
template <class T>
void adam_step(ParamStore<T>& store, const AdamOptions& opt) {
  const std::uint64_t t = store.step() + 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (auto& [_, p] : store) {
    auto val = p.value.values();
    auto g = p.grad.values();
    auto m = p.m.values();
    auto v = p.v.values();
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double gi = g[i];
      const double mi = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      const double vi = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      val[i] = static_cast<T>(val[i] - opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
      g[i] = T{0};
    }
  }
  store.set_step(t);
}

/// Rescales all gradients so their global L2 norm is at most `clip`.
/// Returns the norm before clipping.
template <class T>
double clip_gradients(ParamStore<T>& store, double clip) {
  const double norm = store.grad_norm();
  if (norm > clip && norm > 0.0) {
    const double k = clip / norm;
    for (auto& [_, p] : store)
      for (T& g : p.grad.values()) g = static_cast<T>(g * k);
  }
  return norm;
}

}  // namespace corrkg
