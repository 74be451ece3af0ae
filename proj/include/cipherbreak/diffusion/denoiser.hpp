#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cipherbreak/diffusion/schedule.hpp"
#include "cipherbreak/nn/graph.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak::diffusion {

struct DenoiserArch {
  int image_size = 64;
  int channels = 3;
  int base_width = 16;
  std::vector<int> width_mults{1, 2, 2};  // one entry per resolution level
  int cond_dim = 768;
  int time_dim = 64;
  int groups = 8;
  bool zero_init_output = true;
  // eps(x_t, t, c) = sqrt(1 - abar_t) x_t + U-Net(x_t, t, c).
  bool input_skip = true;

  void validate() const;
  int width(int level) const { return base_width * width_mults[static_cast<std::size_t>(level)]; }
  int levels() const { return static_cast<int>(width_mults.size()); }
};

nlohmann::json to_json(const DenoiserArch& a);
DenoiserArch arch_from_json(const nlohmann::json& j);

// U-Net noise predictor eps(x_t, t, c). Every residual block is
//   GN -> SiLU -> conv -> +time -> GN -> FiLM(c) -> SiLU -> conv, + skip
// and FiLM coefficients come from a per-block linear map of c, so the null
// condition (c = 0) produces exactly the bias-only modulation. The schedule
// fixes the input-skip coefficients and the valid timestep range.
template <class T>
class Denoiser {
 public:
  Denoiser(DenoiserArch arch, const NoiseSchedule& sched, std::uint64_t seed);

  const DenoiserArch& arch() const { return arch_; }
  const NoiseSchedule& schedule() const { return sched_; }
  nn::ParameterSet<T>& params() { return params_; }
  const nn::ParameterSet<T>& params() const { return params_; }

  // x [N,C,H,W], t per item in [1, T], cond [N, cond_dim].
  nn::Var forward(nn::Graph<T>& g, nn::Var x, const std::vector<int>& t, nn::Var cond);

  // Gradient-free prediction.
  nn::Tensor<T> predict(const nn::Tensor<T>& x, const std::vector<int>& t, const nn::Tensor<T>& cond);

 private:
  struct ResBlock {
    int in_ch, out_ch;
    nn::Parameter<T>*conv1_w, *conv1_b, *conv2_w, *conv2_b, *time_w, *time_b, *film_w, *film_b;
    nn::Parameter<T>*skip_w = nullptr, *skip_b = nullptr;
  };
  struct ConvP {
    nn::Parameter<T>*w, *b;
  };

  ResBlock make_block(const std::string& name, int in_ch, int out_ch);
  ConvP make_conv(const std::string& name, int in_ch, int out_ch, int k, bool zero = false);
  nn::Var block_forward(nn::Graph<T>& g, const ResBlock& b, nn::Var x, nn::Var temb, nn::Var cond);
  nn::Var conv(nn::Graph<T>& g, const ConvP& c, nn::Var x, int stride);
  int groups_for(int ch) const;

  DenoiserArch arch_;
  nn::ParameterSet<T> params_;
  std::uint64_t seed_;
  NoiseSchedule sched_;
  Rng* rng_ = nullptr;  // valid only during construction

  nn::Parameter<T>*time1_w, *time1_b, *time2_w, *time2_b;
  ConvP in_conv_, out_conv_;
  std::vector<ResBlock> down_, up_;
  std::vector<ConvP> downsample_, upsample_;
  ResBlock mid_;
};

// Sinusoidal timestep features [N, dim].
template <class T>
nn::Tensor<T> timestep_features(const std::vector<int>& t, int dim);

extern template class Denoiser<float>;
extern template class Denoiser<double>;

}  // namespace cipherbreak::diffusion
