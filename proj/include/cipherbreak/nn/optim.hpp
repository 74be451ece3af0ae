#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cipherbreak/nn/graph.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak::nn {

struct AdamWConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: p <- p - lr*wd*p before the moment update.
template <class T>
class AdamW {
 public:
  AdamW(ParameterSet<T>& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.numel(), T(0));
      v_.emplace_back(params[i].value.numel(), T(0));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T lr = static_cast<T>(cfg_.lr);
    const T decay = static_cast<T>(1.0 - cfg_.lr * cfg_.weight_decay);
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T ic1 = static_cast<T>(1.0 / c1), isc2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      T* w = p.value.data();
      const T* g = p.grad.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (std::size_t j = 0; j < p.value.numel(); ++j) {
        w[j] *= decay;
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        w[j] -= lr * (m[j] * ic1) / (std::sqrt(v[j]) * isc2 + eps);
      }
    }
  }

  void set_lr(double lr) { cfg_.lr = lr; }
  long long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  ParameterSet<T>& params_;
  AdamWConfig cfg_;
  std::vector<std::vector<T>> m_, v_;
  long long t_ = 0;
};

// Exponential moving average of parameter values. Update n uses decay
// min(decay, (1 + n) / (10 + n)) so early weights fade quickly.
template <class T>
class EmaWeights {
 public:
  EmaWeights(const ParameterSet<T>& params, double decay) : decay_(decay) {
    for (std::size_t i = 0; i < params.size(); ++i) shadow_.push_back(params[i].value.vec());
  }

  void update(const ParameterSet<T>& params) {
    ++n_;
    const double d = std::min(decay_, (1.0 + n_) / (10.0 + n_));
    const T keep = static_cast<T>(d), take = static_cast<T>(1.0 - d);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const T* w = params[i].value.data();
      auto& s = shadow_[i];
      for (std::size_t j = 0; j < s.size(); ++j) s[j] = keep * s[j] + take * w[j];
    }
  }

  void copy_to(ParameterSet<T>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(shadow_[i].begin(), shadow_[i].end(), params[i].value.data());
  }

  double decay() const { return decay_; }
  long long updates() const { return n_; }

 private:
  double decay_;
  std::vector<std::vector<T>> shadow_;
  long long n_ = 0;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); scale multiplies the bound.
template <class T>
void init_uniform_fan_in(Parameter<T>& p, int fan_in, Rng& rng, double scale = 1.0) {
  const double bound = scale / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : p.value.vec()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace cipherbreak::nn
