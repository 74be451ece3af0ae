#include "cipherbreak/diffusion/attack.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/keyed_rng.hpp"
#include "cipherbreak/nn/convert.hpp"
#include "cipherbreak/nn/ops.hpp"
#include "cipherbreak/nn/serialize.hpp"

namespace cipherbreak::diffusion {

using nn::Tensor;

std::vector<float> condition_vector(const Embedding& e) {
  double sq = 0;
  for (float v : e) sq += static_cast<double>(v) * v;
  if (!(sq > 0) || !std::isfinite(sq)) throw NumericError("embedding has zero or non-finite norm");
  const double scale = std::sqrt(static_cast<double>(e.size()) / sq);
  std::vector<float> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = static_cast<float>(e[i] * scale);
  return out;
}

Tensor<float> condition_batch(const std::vector<Embedding>& embeddings) {
  if (embeddings.empty()) throw ArgumentError("no embeddings");
  const int d = static_cast<int>(embeddings[0].size());
  Tensor<float> out({static_cast<int>(embeddings.size()), d});
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (static_cast<int>(embeddings[i].size()) != d) throw DimensionError("embedding dimensions differ");
    const auto c = condition_vector(embeddings[i]);
    std::copy(c.begin(), c.end(), out.data() + i * d);
  }
  return out;
}

std::string to_string(Stage s) { return s == Stage::Single ? "single" : "two_stage_etc"; }

Stage parse_stage(const std::string& s) {
  if (s == "single") return Stage::Single;
  if (s == "two_stage_etc" || s == "two-stage") return Stage::TwoStageEtc;
  throw ArgumentError("unknown stage '" + s + "' (expected single or two_stage_etc)");
}

void TrainConfig::validate() const {
  if (steps <= 0) throw ArgumentError("steps must be positive");
  if (!(lr > 0)) throw ArgumentError("learning rate must be positive");
  if (!(weight_decay >= 0)) throw ArgumentError("weight decay must be non-negative");
  if (!(cond_dropout >= 0 && cond_dropout < 1)) throw ArgumentError("cond_dropout must be in [0, 1)");
  if (batch <= 0) throw ArgumentError("batch must be positive");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw ArgumentError("ema_decay must be in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},   {"lr", c.lr},       {"weight_decay", c.weight_decay}, {"cond_dropout", c.cond_dropout},
          {"batch", c.batch}, {"stage", to_string(c.stage)}, {"seed", c.seed},   {"ema_decay", c.ema_decay}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.steps = j.at("steps").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.cond_dropout = j.at("cond_dropout").get<double>();
  c.ema_decay = j.at("ema_decay").get<double>();
  c.batch = j.at("batch").get<int>();
  c.stage = parse_stage(j.at("stage").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json to_json(const ScheduleConfig& c) {
  return {{"kind", "linear"}, {"T", c.T}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}};
}

ScheduleConfig schedule_config_from_json(const nlohmann::json& j) {
  return {j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>()};
}

template <class T>
NoisePlan<T> plan_noise(Rng& rng, const nn::Shape& batch_shape, int timesteps, double cond_dropout) {
  NoisePlan<T> p;
  const int n = batch_shape.at(0);
  for (int i = 0; i < n; ++i) {
    p.t.push_back(rng.range(1, timesteps));
    p.drop.push_back(rng.bernoulli(cond_dropout) ? 1 : 0);
  }
  p.eps = Tensor<T>(batch_shape);
  for (auto& v : p.eps.vec()) v = static_cast<T>(rng.normal());
  return p;
}

template <class T>
nn::Var diffusion_loss(nn::Graph<T>& g, Denoiser<T>& model, const Tensor<T>& x0, const Tensor<T>& cond,
                       const NoisePlan<T>& plan, const NoiseSchedule& sched) {
  const int n = x0.dim(0);
  if (static_cast<int>(plan.t.size()) != n || plan.eps.shape() != x0.shape() || cond.dim(0) != n) {
    throw DimensionError("noise plan does not match the batch");
  }
  if (model.schedule().betas != sched.betas) throw StructuralError("training schedule differs from the model's");
  const std::size_t per = x0.numel() / static_cast<std::size_t>(n);
  Tensor<T> xt(x0.shape());
  for (int i = 0; i < n; ++i) {
    const int t = plan.t[static_cast<std::size_t>(i)];
    sched.check_t(t);
    const T a = static_cast<T>(std::sqrt(sched.alpha_bar(t)));
    const T b = static_cast<T>(std::sqrt(1.0 - sched.alpha_bar(t)));
    for (std::size_t j = i * per; j < (i + 1) * per; ++j) xt[j] = a * x0[j] + b * plan.eps[j];
  }
  Tensor<T> c = cond;
  const std::size_t d = static_cast<std::size_t>(cond.dim(1));
  for (int i = 0; i < n; ++i)
    if (plan.drop[static_cast<std::size_t>(i)]) std::fill(c.data() + i * d, c.data() + (i + 1) * d, T(0));
  const nn::Var pred = model.forward(g, g.constant(std::move(xt)), plan.t, g.constant(std::move(c)));
  return nn::mse(g, pred, g.constant(plan.eps));
}

template <class T>
double train_step(Denoiser<T>& model, nn::AdamW<T>& opt, const Tensor<T>& x0, const Tensor<T>& cond,
                  const NoisePlan<T>& plan, const NoiseSchedule& sched) {
  nn::Graph<T> g(true);
  const nn::Var loss = diffusion_loss(g, model, x0, cond, plan, sched);
  const double value = g.value(loss)[0];
  if (!std::isfinite(value)) {
    std::string ts;
    for (int t : plan.t) ts += " " + std::to_string(t);
    throw NumericError("non-finite diffusion loss after " + std::to_string(opt.steps()) + " steps (t =" + ts + ")");
  }
  model.params().zero_grad();
  g.backward(loss);
  opt.step();
  return value;
}

template NoisePlan<float> plan_noise<float>(Rng&, const nn::Shape&, int, double);
template NoisePlan<double> plan_noise<double>(Rng&, const nn::Shape&, int, double);
template nn::Var diffusion_loss<float>(nn::Graph<float>&, Denoiser<float>&, const Tensor<float>&, const Tensor<float>&,
                                       const NoisePlan<float>&, const NoiseSchedule&);
template nn::Var diffusion_loss<double>(nn::Graph<double>&, Denoiser<double>&, const Tensor<double>&,
                                        const Tensor<double>&, const NoisePlan<double>&, const NoiseSchedule&);
template double train_step<float>(Denoiser<float>&, nn::AdamW<float>&, const Tensor<float>&, const Tensor<float>&,
                                  const NoisePlan<float>&, const NoiseSchedule&);
template double train_step<double>(Denoiser<double>&, nn::AdamW<double>&, const Tensor<double>&,
                                   const Tensor<double>&, const NoisePlan<double>&, const NoiseSchedule&);

Tensor<float> guided_eps(Denoiser<float>& model, const Tensor<float>& x_t, const std::vector<int>& t,
                         const Tensor<float>& cond, double s) {
  if (!(s >= 1.0)) throw ArgumentError("guidance scale must be >= 1");
  Tensor<float> eps_c = model.predict(x_t, t, cond);
  if (s == 1.0) return eps_c;
  const Tensor<float> eps_u = model.predict(x_t, t, Tensor<float>(cond.shape()));
  const float sf = static_cast<float>(s);
  Tensor<float> out(eps_c.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = eps_u[i] + sf * (eps_c[i] - eps_u[i]);
  return out;
}

std::vector<int> sampling_timesteps(int T, int steps) {
  if (steps <= 0 || steps >= T) steps = T;
  std::vector<int> ts;
  for (int i = 0; i < steps; ++i) {
    // Evenly spaced, always including T and 1.
    const int t = steps == 1 ? T : static_cast<int>(std::lround(T - static_cast<double>(i) * (T - 1) / (steps - 1)));
    if (ts.empty() || t < ts.back()) ts.push_back(t);
  }
  return ts;
}

namespace {

std::uint64_t item_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Tensor<float> sample(Denoiser<float>& model, const Tensor<float>& cond, const SampleConfig& cfg,
                     const NoiseSchedule& sched) {
  if (model.schedule().betas != sched.betas) throw StructuralError("sampling schedule differs from the model's");
  const auto& a = model.arch();
  const int n = cond.dim(0), d = cond.dim(1), c = a.channels, s = a.image_size;
  const std::size_t per = static_cast<std::size_t>(c) * s * s;
  const auto ts = sampling_timesteps(sched.T(), cfg.steps);
  Tensor<float> out({n, c, s, s});
  const int chunk = std::max(1, cfg.batch);
  for (int start = 0; start < n; start += chunk) {
    const int m = std::min(chunk, n - start);
    std::vector<Rng> rngs;
    for (int i = 0; i < m; ++i) rngs.emplace_back(item_seed(cfg.seed, static_cast<std::uint64_t>(start + i)));
    Tensor<float> x({m, c, s, s});
    Tensor<float> cc({m, d}, std::vector<float>(cond.data() + static_cast<std::size_t>(start) * d,
                                                cond.data() + static_cast<std::size_t>(start + m) * d));
    for (int i = 0; i < m; ++i)
      for (std::size_t j = 0; j < per; ++j) x[i * per + j] = static_cast<float>(rngs[static_cast<std::size_t>(i)].normal());
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const int t = ts[k];
      const int t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
      const double ab = sched.alpha_bar(t);
      const double ab_prev = t_prev == 0 ? 1.0 : sched.alpha_bar(t_prev);
      const double beta = 1.0 - ab / ab_prev;
      const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
      const double coef_xt = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
      const double sigma = std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab));
      const Tensor<float> eps = guided_eps(model, x, std::vector<int>(static_cast<std::size_t>(m), t), cc,
                                           cfg.guidance_scale);
      for (int i = 0; i < m; ++i) {
        auto& rng = rngs[static_cast<std::size_t>(i)];
        for (std::size_t j = i * per; j < (i + 1) * per; ++j) {
          const double x0 = std::clamp((x[j] - std::sqrt(1.0 - ab) * eps[j]) / std::sqrt(ab), -1.0, 1.0);
          double v = coef_x0 * x0 + coef_xt * x[j];
          if (t_prev > 0) v += sigma * rng.normal();
          x[j] = static_cast<float>(v);
        }
      }
      for (float v : x.vec())
        if (!std::isfinite(v)) throw NumericError("sampling produced non-finite values at t = " + std::to_string(t));
    }
    for (std::size_t j = 0; j < static_cast<std::size_t>(m) * per; ++j)
      out[start * per + j] = std::clamp(x[j], -1.0f, 1.0f);
  }
  return out;
}

std::vector<ImageTensor> to_images(const Tensor<float>& batch) {
  std::vector<ImageTensor> out;
  for (int i = 0; i < batch.dim(0); ++i) out.push_back(nn::from_model(batch, i));
  return out;
}

// ---- checkpoints ----

nlohmann::json to_json(const CheckpointInfo& c) {
  return {{"kind", "cipherbreak-denoiser"},
          {"arch", to_json(c.arch)},
          {"schedule", to_json(c.schedule)},
          {"train", to_json(c.train)},
          {"embedder", {{"spec", c.embedder_spec}, {"fingerprint", c.embedder_fingerprint}}},
          {"scheme", to_json(c.scheme)},
          {"stage", c.stage_name},
          {"parent", c.parent_fingerprint},
          {"steps_done", c.steps_done}};
}

CheckpointInfo checkpoint_info_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "cipherbreak-denoiser") throw DataError("not a denoiser checkpoint");
    CheckpointInfo c;
    c.arch = arch_from_json(j.at("arch"));
    c.schedule = schedule_config_from_json(j.at("schedule"));
    c.train = train_config_from_json(j.at("train"));
    c.embedder_spec = j.at("embedder").at("spec");
    c.embedder_fingerprint = j.at("embedder").at("fingerprint").get<std::string>();
    c.scheme = scheme_from_json(j.at("scheme"));
    c.stage_name = j.at("stage").get<std::string>();
    c.parent_fingerprint = j.at("parent").get<std::string>();
    c.steps_done = j.at("steps_done").get<std::int64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const CheckpointInfo& info) {
  nn::save_parameters(path, model.params(), to_json(info));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const auto header = nn::read_container_header(path);
  CheckpointInfo info = checkpoint_info_from_json(header.at("meta"));
  NoiseSchedule sched = info.schedule.build();
  Denoiser<float> model(info.arch, sched, 0);
  nn::load_parameters(path, model.params());
  return {std::move(model), std::move(info), std::move(sched)};
}

std::string file_fingerprint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return sha256_hex(bytes).substr(0, 16);
}

// ---- training run ----

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& losses) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << "step,stage,loss,dropped\n";
  char buf[32];
  for (const auto& r : losses) {
    std::snprintf(buf, sizeof buf, "%.9g", r.loss);
    out << r.step << "," << r.stage << "," << buf << "," << r.dropped << "\n";
  }
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<double> smooth(const std::vector<double>& v, int window) {
  std::vector<double> out;
  double acc = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    acc += v[i];
    if (i >= static_cast<std::size_t>(window)) acc -= v[i - static_cast<std::size_t>(window)];
    out.push_back(acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window))));
  }
  return out;
}

namespace {

struct StagePlan {
  std::string name;
  SchemeConfig scheme;
};

}  // namespace

AttackRun train_attack(const PairSource& source, const Embedder& embedder, const AttackOptions& opts,
                       const std::filesystem::path& out_dir) {
  opts.train.validate();
  const PairManifest& m = source.manifest();
  if (m.split != "train") throw ArgumentError("attack training expects a train-split manifest");
  if (source.size() == 0) throw DataError("training manifest has no entries");
  if (opts.train.stage == Stage::TwoStageEtc && m.scheme.scheme != Scheme::EtC) {
    throw ArgumentError("two-stage curriculum applies to EtC manifests only");
  }
  DenoiserArch arch = opts.arch;
  arch.image_size = m.image_size;
  arch.cond_dim = embedder.dim();
  const NoiseSchedule sched = opts.schedule.build();

  Denoiser<float> model(arch, sched, opts.init_seed);
  std::string parent;
  if (opts.resume) {
    const auto header = nn::read_container_header(*opts.resume);
    const auto info = checkpoint_info_from_json(header.at("meta"));
    if (to_json(info.arch) != to_json(arch)) throw DimensionError("resume checkpoint architecture differs");
    nn::load_parameters(*opts.resume, model.params());
    parent = file_fingerprint(*opts.resume);
  }

  std::vector<StagePlan> stages;
  if (opts.train.stage == Stage::TwoStageEtc) {
    SchemeConfig scramble = m.scheme;
    scramble.scramble_only = true;
    SchemeConfig full = m.scheme;
    full.scramble_only = false;
    stages = {{"stage1", scramble}, {"stage2", full}};
  } else {
    stages = {{"single", m.scheme}};
  }

  std::filesystem::create_directories(out_dir);
  // Weights are recorded relative to the checkpoint directory.
  EmbedderSpec recorded = embedder.spec();
  if (!recorded.weights.empty()) {
    recorded.weights = std::filesystem::relative(std::filesystem::absolute(recorded.weights),
                                                 std::filesystem::absolute(out_dir));
  }
  const nlohmann::json embedder_json = to_json(recorded);

  AttackRun run;
  Rng rng(opts.train.seed);
  const int n = static_cast<int>(source.size());
  const int batch = opts.train.batch;
  const int size = m.image_size;
  const std::size_t per = static_cast<std::size_t>(3) * size * size;
  const Tensor<float> plain_all = nn::to_model(source.plain_images());
  int global_step = 0;
  std::int64_t steps_done = 0;
  if (opts.resume) steps_done = checkpoint_info_from_json(nn::read_container_header(*opts.resume).at("meta")).steps_done;

  for (const auto& stage : stages) {
    nn::AdamW<float> opt(model.params(), {opts.train.lr, 0.9, 0.999, 1e-8, opts.train.weight_decay});
    nn::EmaWeights<float> ema(model.params(), opts.train.ema_decay);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::size_t cursor = order.size();
    std::uint64_t epoch = 0;
    bool first_epoch = true;
    Tensor<float> conds;
    for (int step = 0; step < opts.train.steps; ++step) {
      Tensor<float> x0({batch, 3, size, size});
      Tensor<float> cond({batch, arch.cond_dim});
      for (int b = 0; b < batch; ++b) {
        if (cursor >= order.size()) {
          if (!first_epoch) ++epoch;
          first_epoch = false;
          // Fresh key (per-epoch policy) and fresh order every pass.
          conds = condition_batch(embedder.embed_batch(source.encrypted_epoch(epoch, stage.scheme)));
          std::iota(order.begin(), order.end(), 0);
          for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
          cursor = 0;
        }
        const int idx = order[cursor++];
        std::copy(plain_all.data() + idx * per, plain_all.data() + (idx + 1) * per, x0.data() + b * per);
        std::copy(conds.data() + static_cast<std::size_t>(idx) * arch.cond_dim,
                  conds.data() + static_cast<std::size_t>(idx + 1) * arch.cond_dim,
                  cond.data() + static_cast<std::size_t>(b) * arch.cond_dim);
      }
      const auto plan = plan_noise<float>(rng, x0.shape(), sched.T(), opts.train.cond_dropout);
      const double loss = train_step(model, opt, x0, cond, plan, sched);
      const int dropped = std::accumulate(plan.drop.begin(), plan.drop.end(), 0);
      run.conditions_seen += batch;
      run.conditions_dropped += dropped;
      LossRecord rec{++global_step, stage.name, loss, dropped};
      run.losses.push_back(rec);
      if (opts.train.ema_decay > 0) ema.update(model.params());
      if (opts.on_step) opts.on_step(rec);
    }
    steps_done += opts.train.steps;
    CheckpointInfo info;
    info.arch = arch;
    info.schedule = opts.schedule;
    info.train = opts.train;
    info.embedder_spec = embedder_json;
    info.embedder_fingerprint = embedder.fingerprint();
    info.scheme = stage.scheme;
    info.stage_name = stage.name;
    info.parent_fingerprint = parent;
    info.steps_done = steps_done;
    const auto path = out_dir / (stage.name + ".ckpt");
    if (opts.train.ema_decay > 0) {
      // The checkpoint holds the averaged weights; training continues from the raw ones.
      Denoiser<float> averaged(arch, sched, opts.init_seed);
      ema.copy_to(averaged.params());
      save_checkpoint(path, averaged, info);
    } else {
      save_checkpoint(path, model, info);
    }
    parent = file_fingerprint(path);
    run.checkpoints.push_back(path);
  }
  write_loss_csv(out_dir / "loss.csv", run.losses);
  return run;
}

}  // namespace cipherbreak::diffusion
