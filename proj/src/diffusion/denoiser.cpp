#include "cipherbreak/diffusion/denoiser.hpp"

#include <cmath>
#include <numeric>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/nn/ops.hpp"
#include "cipherbreak/nn/optim.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak::diffusion {

using nn::Graph;
using nn::Parameter;
using nn::Tensor;
using nn::Var;

void DenoiserArch::validate() const {
  if (image_size <= 0 || channels <= 0 || base_width <= 0 || cond_dim <= 0 || time_dim <= 0 || groups <= 0) {
    throw ArgumentError("denoiser dimensions must be positive");
  }
  if (width_mults.empty()) throw ArgumentError("denoiser needs at least one level");
  for (int m : width_mults)
    if (m <= 0) throw ArgumentError("width multipliers must be positive");
  if (time_dim % 2 != 0) throw ArgumentError("time_dim must be even");
  if (image_size % (1 << (levels() - 1)) != 0) {
    throw DimensionError("image size " + std::to_string(image_size) + " not divisible by 2^(levels-1)");
  }
}

nlohmann::json to_json(const DenoiserArch& a) {
  return {{"image_size", a.image_size}, {"channels", a.channels}, {"base_width", a.base_width},
          {"width_mults", a.width_mults}, {"cond_dim", a.cond_dim},   {"time_dim", a.time_dim},
          {"groups", a.groups},          {"zero_init_output", a.zero_init_output}, {"input_skip", a.input_skip}};
}

DenoiserArch arch_from_json(const nlohmann::json& j) {
  DenoiserArch a;
  a.image_size = j.at("image_size").get<int>();
  a.channels = j.at("channels").get<int>();
  a.base_width = j.at("base_width").get<int>();
  a.width_mults = j.at("width_mults").get<std::vector<int>>();
  a.cond_dim = j.at("cond_dim").get<int>();
  a.time_dim = j.at("time_dim").get<int>();
  a.groups = j.at("groups").get<int>();
  a.zero_init_output = j.at("zero_init_output").get<bool>();
  a.input_skip = j.at("input_skip").get<bool>();
  a.validate();
  return a;
}

template <class T>
Tensor<T> timestep_features(const std::vector<int>& t, int dim) {
  const int half = dim / 2;
  Tensor<T> out({static_cast<int>(t.size()), dim});
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double arg = t[n] * freq;
      out[n * dim + i] = static_cast<T>(std::sin(arg));
      out[n * dim + half + i] = static_cast<T>(std::cos(arg));
    }
  }
  return out;
}

namespace {

template <class T>
Parameter<T>* init(nn::ParameterSet<T>& ps, Rng& rng, const std::string& name, nn::Shape shape, int fan_in,
                   double scale) {
  auto& p = ps.add(name, std::move(shape));
  if (scale != 0.0) nn::init_uniform_fan_in(p, fan_in, rng, scale);
  return &p;
}

}  // namespace

template <class T>
Denoiser<T>::Denoiser(DenoiserArch arch, const NoiseSchedule& sched, std::uint64_t seed)
    : arch_(std::move(arch)), seed_(seed), sched_(sched) {
  arch_.validate();
  sched_.validate();
  Rng rng(seed);
  const int td = arch_.time_dim;
  time1_w = init(params_, rng, "time.fc1.w", {td, td}, td, 1.0);
  time1_b = init(params_, rng, "time.fc1.b", {td}, td, 0.0);
  time2_w = init(params_, rng, "time.fc2.w", {td, td}, td, 1.0);
  time2_b = init(params_, rng, "time.fc2.b", {td}, td, 0.0);

  // Block constructors draw from the same generator in declaration order.
  rng_ = &rng;
  in_conv_ = make_conv("in", arch_.channels, arch_.width(0), 3);
  int ch = arch_.width(0);
  for (int l = 0; l < arch_.levels(); ++l) {
    down_.push_back(make_block("down" + std::to_string(l), ch, arch_.width(l)));
    ch = arch_.width(l);
    if (l + 1 < arch_.levels()) downsample_.push_back(make_conv("downsample" + std::to_string(l), ch, ch, 3));
  }
  mid_ = make_block("mid", ch, ch);
  for (int l = arch_.levels() - 1; l >= 0; --l) {
    up_.push_back(make_block("up" + std::to_string(l), ch + arch_.width(l), arch_.width(l)));
    ch = arch_.width(l);
    if (l > 0) upsample_.push_back(make_conv("upsample" + std::to_string(l), ch, ch, 3));
  }
  out_conv_ = make_conv("out", ch, arch_.channels, 3, arch_.zero_init_output);
  rng_ = nullptr;
}

template <class T>
typename Denoiser<T>::ConvP Denoiser<T>::make_conv(const std::string& name, int in_ch, int out_ch, int k, bool zero) {
  const int fan_in = in_ch * k * k;
  return {init(params_, *rng_, name + ".w", {out_ch, in_ch, k, k}, fan_in, zero ? 0.0 : 1.0),
          init(params_, *rng_, name + ".b", {out_ch}, fan_in, 0.0)};
}

template <class T>
typename Denoiser<T>::ResBlock Denoiser<T>::make_block(const std::string& name, int in_ch, int out_ch) {
  ResBlock b{};
  b.in_ch = in_ch;
  b.out_ch = out_ch;
  const auto c1 = make_conv(name + ".conv1", in_ch, out_ch, 3);
  b.conv1_w = c1.w;
  b.conv1_b = c1.b;
  b.time_w = init(params_, *rng_, name + ".time.w", {out_ch, arch_.time_dim}, arch_.time_dim, 1.0);
  b.time_b = init(params_, *rng_, name + ".time.b", {out_ch}, arch_.time_dim, 0.0);
  // Small initial modulation keeps early training close to the unconditional net.
  b.film_w = init(params_, *rng_, name + ".film.w", {2 * out_ch, arch_.cond_dim}, arch_.cond_dim, 0.1);
  b.film_b = init(params_, *rng_, name + ".film.b", {2 * out_ch}, arch_.cond_dim, 0.0);
  const auto c2 = make_conv(name + ".conv2", out_ch, out_ch, 3);
  b.conv2_w = c2.w;
  b.conv2_b = c2.b;
  if (in_ch != out_ch) {
    const auto s = make_conv(name + ".skip", in_ch, out_ch, 1);
    b.skip_w = s.w;
    b.skip_b = s.b;
  }
  return b;
}

template <class T>
int Denoiser<T>::groups_for(int ch) const {
  return std::gcd(arch_.groups, ch);
}

template <class T>
Var Denoiser<T>::conv(Graph<T>& g, const ConvP& c, Var x, int stride) {
  const int k = c.w->value.dim(2);
  return nn::conv2d(g, x, g.param(*c.w), g.param(*c.b), stride, k / 2);
}

template <class T>
Var Denoiser<T>::block_forward(Graph<T>& g, const ResBlock& b, Var x, Var temb, Var cond) {
  Var h = nn::group_norm(g, x, groups_for(b.in_ch));
  h = nn::silu(g, h);
  h = nn::conv2d(g, h, g.param(*b.conv1_w), g.param(*b.conv1_b), 1, 1);
  h = nn::add_channel_bias(g, h, nn::linear(g, temb, g.param(*b.time_w), g.param(*b.time_b)));
  h = nn::group_norm(g, h, groups_for(b.out_ch));
  const Var mod = nn::linear(g, cond, g.param(*b.film_w), g.param(*b.film_b));
  h = nn::film(g, h, nn::slice_columns(g, mod, 0, b.out_ch), nn::slice_columns(g, mod, b.out_ch, 2 * b.out_ch));
  h = nn::silu(g, h);
  h = nn::conv2d(g, h, g.param(*b.conv2_w), g.param(*b.conv2_b), 1, 1);
  const Var skip = b.skip_w ? nn::conv2d(g, x, g.param(*b.skip_w), g.param(*b.skip_b), 1, 0) : x;
  return nn::add(g, h, skip);
}

template <class T>
Var Denoiser<T>::forward(Graph<T>& g, Var x, const std::vector<int>& t, Var cond) {
  const nn::Shape xs = g.shape(x);
  if (xs.size() != 4 || xs[1] != arch_.channels || xs[2] % (1 << (arch_.levels() - 1)) != 0 ||
      xs[3] % (1 << (arch_.levels() - 1)) != 0) {
    throw DimensionError("denoiser input shape " + nn::shape_string(xs) + " incompatible with architecture");
  }
  if (static_cast<int>(t.size()) != xs[0] || g.shape(cond) != nn::Shape{xs[0], arch_.cond_dim}) {
    throw DimensionError("denoiser timestep/condition batch mismatch");
  }
  for (int ti : t) sched_.check_t(ti);
  Var temb = g.constant(timestep_features<T>(t, arch_.time_dim));
  temb = nn::linear(g, temb, g.param(*time1_w), g.param(*time1_b));
  temb = nn::silu(g, temb);
  temb = nn::linear(g, temb, g.param(*time2_w), g.param(*time2_b));
  temb = nn::silu(g, temb);

  Var h = conv(g, in_conv_, x, 1);
  std::vector<Var> skips;
  for (int l = 0; l < arch_.levels(); ++l) {
    h = block_forward(g, down_[static_cast<std::size_t>(l)], h, temb, cond);
    skips.push_back(h);
    if (l + 1 < arch_.levels()) h = conv(g, downsample_[static_cast<std::size_t>(l)], h, 2);
  }
  h = block_forward(g, mid_, h, temb, cond);
  for (int i = 0; i < arch_.levels(); ++i) {
    const int l = arch_.levels() - 1 - i;
    h = nn::concat_channels(g, h, skips[static_cast<std::size_t>(l)]);
    h = block_forward(g, up_[static_cast<std::size_t>(i)], h, temb, cond);
    if (l > 0) h = conv(g, upsample_[static_cast<std::size_t>(i)], nn::upsample_nearest2(g, h), 1);
  }
  h = nn::group_norm(g, h, groups_for(arch_.width(0)));
  h = nn::silu(g, h);
  h = conv(g, out_conv_, h, 1);
  if (!arch_.input_skip) return h;
  Tensor<T> scale({xs[0], xs[1]});
  for (int i = 0; i < xs[0]; ++i)
    for (int c = 0; c < xs[1]; ++c) scale[i * xs[1] + c] = static_cast<T>(std::sqrt(1.0 - sched_.alpha_bar(t[i])) - 1.0);
  const Var shift = g.constant(Tensor<T>(scale.shape()));
  return nn::add(g, h, nn::film(g, x, g.constant(std::move(scale)), shift));
}

template <class T>
Tensor<T> Denoiser<T>::predict(const Tensor<T>& x, const std::vector<int>& t, const Tensor<T>& cond) {
  Graph<T> g(false);
  const Var y = forward(g, g.constant(x), t, g.constant(cond));
  return g.value(y);
}

template class Denoiser<float>;
template class Denoiser<double>;
template Tensor<float> timestep_features<float>(const std::vector<int>&, int);
template Tensor<double> timestep_features<double>(const std::vector<int>&, int);

}  // namespace cipherbreak::diffusion
