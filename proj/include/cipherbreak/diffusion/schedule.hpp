#pragma once

#include <cmath>
#include <vector>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/nn/tensor.hpp"

namespace cipherbreak::diffusion {

// Timesteps are 1-based: t in [1, T].
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  int T() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas[index(t)]; }
  double alpha(int t) const { return alphas[index(t)]; }
  double alpha_bar(int t) const { return alpha_bars[index(t)]; }
  // alpha_bar at t-1 with alpha_bar(0) = 1.
  double alpha_bar_prev(int t) const { return t == 1 ? 1.0 : alpha_bar(t - 1); }

  void check_t(int t) const {
    if (t < 1 || t > T()) {
      throw ArgumentError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T()) + "]");
    }
  }

  // Throws StructuralError if any schedule invariant fails.
  void validate() const;

 private:
  std::size_t index(int t) const {
    check_t(t);
    return static_cast<std::size_t>(t - 1);
  }
};

// Linear betas. For T != 1000 the endpoints are scaled by 1000/T so the
// total noise (and alpha_bar_T) stays comparable.
NoiseSchedule linear_schedule(int T, double beta_start = 1e-4, double beta_end = 2e-2);
NoiseSchedule schedule_from_betas(std::vector<double> betas);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <class T>
nn::Tensor<T> forward_diffuse(const nn::Tensor<T>& x0, int t, const nn::Tensor<T>& eps, const NoiseSchedule& s) {
  s.check_t(t);
  if (x0.shape() != eps.shape()) throw StructuralError("forward_diffuse: eps shape differs from x0");
  const T a = static_cast<T>(std::sqrt(s.alpha_bar(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - s.alpha_bar(t)));
  nn::Tensor<T> out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

// x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps.
template <class T>
nn::Tensor<T> single_step_kernel(const nn::Tensor<T>& x_prev, int t, const NoiseSchedule& s, const nn::Tensor<T>& eps) {
  s.check_t(t);
  if (x_prev.shape() != eps.shape()) throw StructuralError("single_step_kernel: eps shape differs from input");
  const T a = static_cast<T>(std::sqrt(1.0 - s.beta(t)));
  const T b = static_cast<T>(std::sqrt(s.beta(t)));
  nn::Tensor<T> out(x_prev.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x_prev[i] + b * eps[i];
  return out;
}

}  // namespace cipherbreak::diffusion
