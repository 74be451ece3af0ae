#include "cipherbreak/diffusion/schedule.hpp"

namespace cipherbreak::diffusion {

void NoiseSchedule::validate() const {
  if (betas.empty()) throw StructuralError("noise schedule is empty");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw StructuralError("beta outside (0, 1)");
    if (i > 0 && betas[i] < betas[i - 1]) throw StructuralError("betas must be non-decreasing");
    if (i > 0 && !(alpha_bars[i] < alpha_bars[i - 1])) throw StructuralError("alpha_bar must strictly decrease");
  }
  if (alpha_bars.back() > 0.01) throw StructuralError("alpha_bar_T exceeds 0.01");
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  s.betas = std::move(betas);
  double prod = 1.0;
  for (double b : s.betas) {
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  s.validate();
  return s;
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw ArgumentError("schedule needs T >= 2");
  const double scale = 1000.0 / T;
  const double lo = beta_start * scale, hi = std::min(beta_end * scale, 0.999);
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) betas[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (T - 1);
  return schedule_from_betas(std::move(betas));
}

}  // namespace cipherbreak::diffusion
