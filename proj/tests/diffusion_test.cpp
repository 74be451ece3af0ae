#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "cipherbreak/diffusion/attack.hpp"
#include "cipherbreak/errors.hpp"
#include "cipherbreak/nn/convert.hpp"
#include "cipherbreak/synthetic.hpp"

using namespace cipherbreak;
using namespace cipherbreak::diffusion;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

DenoiserArch tiny_arch(int size = 8, int cond_dim = 4) {
  DenoiserArch a;
  a.image_size = size;
  a.base_width = 4;
  a.width_mults = {1, 2};
  a.cond_dim = cond_dim;
  a.time_dim = 8;
  a.groups = 2;
  return a;
}

template <class T>
Tensor<T> normal_tensor(const nn::Shape& shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<T> t(shape);
  for (auto& v : t.vec()) v = static_cast<T>(scale * rng.normal());
  return t;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cb_diffusion_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Schedule, LinearInvariants) {
  for (int T : {50, 200, 1000}) {
    const auto s = linear_schedule(T);
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.T(), T);
    EXPECT_NEAR(s.beta(1), 1e-4 * 1000 / T, 1e-15);
    EXPECT_NEAR(s.beta(T), 2e-2 * 1000 / T, 1e-15);
    EXPECT_LE(s.alpha_bar(T), 0.01);
    for (int t = 2; t <= T; ++t) {
      EXPECT_GE(s.beta(t), s.beta(t - 1));
      EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
      EXPECT_NEAR(s.alpha_bar(t), s.alpha_bar(t - 1) * (1 - s.beta(t)), 1e-15);
    }
  }
  EXPECT_NEAR(linear_schedule(1000).alpha_bar(1000), 4.036e-5, 1e-7);
  EXPECT_THROW(linear_schedule(200).beta(0), ArgumentError);
  EXPECT_THROW(linear_schedule(200).beta(201), ArgumentError);
  EXPECT_THROW(schedule_from_betas({0.1, 0.05}).validate(), StructuralError);
  EXPECT_THROW(schedule_from_betas({1e-4, 2e-4}).validate(), StructuralError);  // alpha_bar_T too large
}

TEST(Schedule, ForwardDiffuseExample) {
  const auto s = schedule_from_betas({0.36, 0.75, 0.95});
  // alpha_bar = 0.64, 0.16, 0.008
  const Tensor<double> x0({1, 1, 1, 2}, std::vector<double>{1.0, -0.5});
  const Tensor<double> eps({1, 1, 1, 2}, std::vector<double>{0.5, 2.0});
  const auto x1 = forward_diffuse(x0, 1, eps, s);
  EXPECT_NEAR(x1[0], 0.8 * 1.0 + 0.6 * 0.5, 1e-15);
  EXPECT_NEAR(x1[1], 0.8 * -0.5 + 0.6 * 2.0, 1e-15);
  const auto x2 = forward_diffuse(x0, 2, eps, s);
  EXPECT_NEAR(x2[0], 0.4 * 1.0 + std::sqrt(0.84) * 0.5, 1e-15);
  const auto k = single_step_kernel(x0, 2, s, eps);
  EXPECT_NEAR(k[1], 0.5 * -0.5 + std::sqrt(0.75) * 2.0, 1e-15);
  EXPECT_THROW(forward_diffuse(x0, 1, Tensor<double>({1, 1, 1, 3}), s), StructuralError);
}

TEST(Schedule, ChainedKernelsMatchMarginalInDistribution) {
  // Monte Carlo: applying the per-step kernel t times gives mean sqrt(abar) x0
  // and variance 1 - abar.
  const auto s = linear_schedule(200);
  const int n = 20000;
  const Tensor<double> x0({1, 1, 1, n}, std::vector<double>(n, 0.7));
  Rng rng(5);
  Tensor<double> x = x0;
  for (int t = 1; t <= 60; ++t) {
    Tensor<double> eps(x.shape());
    for (auto& v : eps.vec()) v = rng.normal();
    x = single_step_kernel(x, t, s, eps);
  }
  const double mean = std::accumulate(x.vec().begin(), x.vec().end(), 0.0) / n;
  double var = 0;
  for (double v : x.vec()) var += (v - mean) * (v - mean);
  var /= n - 1;
  const double ab = s.alpha_bar(60);
  EXPECT_NEAR(mean, std::sqrt(ab) * 0.7, 4 * std::sqrt((1 - ab) / n));
  EXPECT_NEAR(var, 1 - ab, 0.03 * (1 - ab));
}

TEST(NoisePlan, DropoutRateAndTimestepRange) {
  Rng rng(1);
  const int n = 20000;
  const auto p = plan_noise<float>(rng, {n, 1, 1, 1}, 200, 0.1);
  const int dropped = std::accumulate(p.drop.begin(), p.drop.end(), 0);
  EXPECT_NEAR(dropped / static_cast<double>(n), 0.1, 4 * std::sqrt(0.09 / n));
  EXPECT_EQ(*std::min_element(p.t.begin(), p.t.end()), 1);
  EXPECT_EQ(*std::max_element(p.t.begin(), p.t.end()), 200);
  Rng r0(2);
  const auto none = plan_noise<float>(r0, {100, 1, 1, 1}, 200, 0.0);
  EXPECT_EQ(std::accumulate(none.drop.begin(), none.drop.end(), 0), 0);
}

TEST(Condition, UnitNormScaledBySqrtD) {
  const Embedding e{3, 4};
  const auto c = condition_vector(e);
  EXPECT_NEAR(c[0], 0.6 * std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(c[1], 0.8 * std::sqrt(2.0), 1e-6);
  EXPECT_THROW(condition_vector(Embedding{0, 0}), NumericError);
}

TEST(Denoiser, LossGradientsMatchFiniteDifferences) {
  auto arch = tiny_arch();
  arch.zero_init_output = false;
  const auto sched = linear_schedule(50);
  Denoiser<double> model(arch, sched, 3);
  const auto x0 = normal_tensor<double>({2, 3, 8, 8}, 1, 0.5);
  const auto cond = normal_tensor<double>({2, 4}, 2);
  Rng rng(4);
  auto plan = plan_noise<double>(rng, x0.shape(), 50, 0.0);
  plan.drop[1] = 1;
  const auto loss_value = [&] {
    nn::Graph<double> g(false);
    return g.value(diffusion_loss(g, model, x0, cond, plan, sched))[0];
  };
  auto& ps = model.params();
  ps.zero_grad();
  {
    nn::Graph<double> g(true);
    g.backward(diffusion_loss(g, model, x0, cond, plan, sched));
  }
  const double h = 1e-5;
  double worst = 0;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    // Every parameter tensor, first entries plus a stride through the rest.
    const std::size_t stride = std::max<std::size_t>(1, p.value.numel() / 6);
    for (std::size_t j = 0; j < p.value.numel(); j += stride) {
      const double saved = p.value[j];
      p.value[j] = saved + h;
      const double up = loss_value();
      p.value[j] = saved - h;
      const double down = loss_value();
      p.value[j] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err = std::abs(numeric - p.grad[j]) / std::max(1e-4, std::abs(numeric) + std::abs(p.grad[j]));
      worst = std::max(worst, err);
      ++checked;
      EXPECT_LT(err, 1e-5) << p.name << "[" << j << "]";
    }
  }
  EXPECT_GT(checked, 100u);
  EXPECT_LT(worst, 1e-5);
}

TEST(Denoiser, DroppedConditionEqualsZeroCondition) {
  const auto sched = linear_schedule(50);
  auto plain = tiny_arch();
  plain.input_skip = false;
  Denoiser<float> model(plain, sched, 1);
  Denoiser<float> skipped(tiny_arch(), sched, 1);
  auto arch = tiny_arch();
  arch.zero_init_output = false;
  Denoiser<float> live(arch, sched, 1);
  const auto x = normal_tensor<float>({2, 3, 8, 8}, 1);
  const auto cond = normal_tensor<float>({2, 4}, 2);
  const std::vector<int> t{5, 40};
  const auto a = live.predict(x, t, Tensor<float>(cond.shape()));
  const auto b = live.predict(x, t, cond);
  EXPECT_NE(a.vec(), b.vec());
  // Zero-init output layer: the untrained model predicts exactly zero.
  for (float v : model.predict(x, t, cond).vec()) EXPECT_EQ(v, 0.0f);
  // With the input skip it predicts sqrt(1 - abar_t) x_t.
  const auto s = skipped.predict(x, t, cond);
  const std::size_t per = x.numel() / 2;
  for (std::size_t j = 0; j < x.numel(); ++j)
    EXPECT_NEAR(s[j], std::sqrt(1 - sched.alpha_bar(t[j / per])) * x[j], 1e-6);
  EXPECT_THROW(model.predict(x, {5, 51}, cond), ArgumentError);
}

TEST(Guidance, ScaleIdentitiesHoldExactly) {
  auto arch = tiny_arch();
  arch.zero_init_output = false;
  Denoiser<float> model(arch, linear_schedule(50), 7);
  const auto x = normal_tensor<float>({3, 3, 8, 8}, 3);
  const auto cond = normal_tensor<float>({3, 4}, 4);
  const std::vector<int> t{1, 20, 50};
  const auto eps_c = model.predict(x, t, cond);
  const auto eps_u = model.predict(x, t, Tensor<float>(cond.shape()));
  EXPECT_EQ(guided_eps(model, x, t, cond, 1.0).vec(), eps_c.vec());
  EXPECT_EQ(guided_eps(model, x, t, Tensor<float>(cond.shape()), 4.0).vec(), eps_u.vec());
  const auto g3 = guided_eps(model, x, t, cond, 3.0);
  for (std::size_t i = 0; i < g3.numel(); ++i) EXPECT_EQ(g3[i], eps_u[i] + 3.0f * (eps_c[i] - eps_u[i]));
  EXPECT_THROW(guided_eps(model, x, t, cond, 0.5), ArgumentError);
}

TEST(Training, UntrainedLossNearOne) {
  // Without the input skip the zero-initialized model predicts 0, so the loss is E[eps^2].
  auto arch = tiny_arch(16, 8);
  arch.input_skip = false;
  const auto sched = linear_schedule(200);
  Denoiser<float> model(arch, sched, 2);
  const auto x0 = normal_tensor<float>({16, 3, 16, 16}, 5, 0.5);
  const auto cond = normal_tensor<float>({16, 8}, 6);
  Rng rng(7);
  nn::Graph<float> g(false);
  const double loss = g.value(diffusion_loss(g, model, x0, cond, plan_noise<float>(rng, x0.shape(), 200, 0.1), sched))[0];
  EXPECT_NEAR(loss, 1.0, 0.3);
}

TEST(Training, LossDecreasesOnSmallDataset) {
  auto arch = tiny_arch(16, 8);
  arch.base_width = 8;
  const auto sched = linear_schedule(200);
  Denoiser<float> model(arch, sched, 2);
  nn::AdamW<float> opt(model.params(), {2e-3, 0.9, 0.999, 1e-8, 0.01});
  std::vector<ImageTensor> imgs;
  for (std::uint64_t i = 0; i < 10; ++i) imgs.push_back(synthetic::shapes_image(16, 2, i));
  const auto x0 = nn::to_model(imgs);
  const auto cond = normal_tensor<float>({10, 8}, 1);
  // Loss on a fixed set of probes (16 draws of t and noise per image).
  Rng probe_rng(99);
  std::vector<NoisePlan<float>> probes;
  for (int i = 0; i < 16; ++i) probes.push_back(plan_noise<float>(probe_rng, x0.shape(), 200, 0.0));
  const auto probe_loss = [&] {
    double total = 0;
    for (const auto& p : probes) {
      nn::Graph<float> g(false);
      total += g.value(diffusion_loss(g, model, x0, cond, p, sched))[0];
    }
    return total / probes.size();
  };
  const double before = probe_loss();
  Rng rng(3);
  for (int s = 0; s < 200; ++s) train_step(model, opt, x0, cond, plan_noise<float>(rng, x0.shape(), 200, 0.1), sched);
  EXPECT_LT(probe_loss(), 0.75 * before);
}

TEST(Sampling, TimestepsAndDeterminism) {
  EXPECT_EQ(sampling_timesteps(5, 0), (std::vector<int>{5, 4, 3, 2, 1}));
  EXPECT_EQ(sampling_timesteps(7, 3), (std::vector<int>{7, 4, 1}));
  EXPECT_EQ(sampling_timesteps(7, 99).size(), 7u);

  auto arch = tiny_arch();
  arch.zero_init_output = false;
  const auto sched = linear_schedule(20);
  Denoiser<float> model(arch, sched, 9);
  const auto cond = normal_tensor<float>({3, 4}, 1);
  SampleConfig cfg;
  cfg.seed = 11;
  cfg.batch = 2;
  const auto a = sample(model, cond, cfg, sched);
  const auto b = sample(model, cond, cfg, sched);
  EXPECT_EQ(a.vec(), b.vec());
  for (float v : a.vec()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LE(std::abs(v), 1.0f);
  }
  // Item i depends only on (condition, seed, i), not on batching.
  cfg.batch = 3;
  EXPECT_EQ(sample(model, cond, cfg, sched).vec(), a.vec());
  cfg.seed = 12;
  EXPECT_NE(sample(model, cond, cfg, sched).vec(), a.vec());
}

TEST(Checkpoint, RoundTripAndParentage) {
  const auto dir = scratch("ckpt");
  auto arch = tiny_arch();
  arch.zero_init_output = false;
  CheckpointInfo info;
  info.arch = arch;
  info.schedule = {20, 1e-4, 2e-2};
  Denoiser<float> model(arch, info.schedule.build(), 4);
  info.embedder_spec = {{"kind", "toy_conv"}};
  info.embedder_fingerprint = "0123456789abcdef";
  info.scheme = SchemeConfig::defaults(Scheme::EtC);
  info.stage_name = "stage1";
  info.steps_done = 17;
  save_checkpoint(dir / "a.ckpt", model, info);
  auto loaded = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(to_json(loaded.info).dump(), to_json(info).dump());
  EXPECT_EQ(loaded.schedule.T(), 20);
  const auto x = normal_tensor<float>({1, 3, 8, 8}, 2);
  const auto c = normal_tensor<float>({1, 4}, 3);
  EXPECT_EQ(loaded.model.predict(x, {3}, c).vec(), model.predict(x, {3}, c).vec());
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  EXPECT_EQ(file_fingerprint(dir / "a.ckpt").size(), 16u);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(TrainAttack, TwoStageRunRecordsParentAndKeysPerEpoch) {
  const auto src = scratch("attack_src");
  synthetic::write_shapes_dataset(src, 4, 16, 1);
  const auto build = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 16, 1.0, 1, KeyPolicy::per_epoch(3),
                                    scratch("attack_data"));
  const PairSource source(build.train);
  EmbedderSpec es;
  es.kind = EmbedderKind::RandomProjection;
  es.d = 8;
  es.input_size = 16;
  const Embedder embedder(es);
  AttackOptions opts;
  opts.arch = tiny_arch(16, 8);
  opts.schedule = {20, 1e-4, 2e-2};
  opts.train.steps = 6;
  opts.train.batch = 2;
  opts.train.stage = Stage::TwoStageEtc;
  const auto out = scratch("attack_out");
  const auto run = train_attack(source, embedder, opts, out);
  ASSERT_EQ(run.checkpoints.size(), 2u);
  EXPECT_EQ(run.losses.size(), 12u);
  EXPECT_EQ(run.losses.front().stage, "stage1");
  EXPECT_EQ(run.losses.back().stage, "stage2");
  EXPECT_EQ(run.losses.back().step, 12);
  EXPECT_EQ(run.conditions_seen, 24);
  const auto first = load_checkpoint(run.checkpoints[0]);
  const auto second = load_checkpoint(run.checkpoints[1]);
  EXPECT_TRUE(first.info.parent_fingerprint.empty());
  EXPECT_EQ(second.info.parent_fingerprint, file_fingerprint(run.checkpoints[0]));
  EXPECT_EQ(second.info.embedder_fingerprint, embedder.fingerprint());
  EXPECT_EQ(second.info.steps_done, 12);
  EXPECT_TRUE(fs::exists(out / "loss.csv"));
}
