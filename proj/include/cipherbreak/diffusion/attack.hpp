#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cipherbreak/dataset.hpp"
#include "cipherbreak/diffusion/denoiser.hpp"
#include "cipherbreak/diffusion/schedule.hpp"
#include "cipherbreak/embedder.hpp"
#include "cipherbreak/nn/optim.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak::diffusion {

// ---- conditioning ----

// Unit-normalized embedding scaled by sqrt(d); the null condition is zeros.
std::vector<float> condition_vector(const Embedding& e);
nn::Tensor<float> condition_batch(const std::vector<Embedding>& embeddings);

// ---- training ----

enum class Stage { Single, TwoStageEtc };
std::string to_string(Stage s);
Stage parse_stage(const std::string& s);

struct TrainConfig {
  int steps = 20000;  // per stage
  double lr = 5e-4;
  double weight_decay = 0.01;
  double cond_dropout = 0.10;
  int batch = 8;
  // Checkpoints store an exponential moving average of the weights; 0 stores the raw weights.
  double ema_decay = 0.999;
  Stage stage = Stage::Single;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct ScheduleConfig {
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  NoiseSchedule build() const { return linear_schedule(T, beta_start, beta_end); }
};

nlohmann::json to_json(const ScheduleConfig& c);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j);

// Per-step randomness, drawn item by item: t ~ U{1..T}, drop ~ Bernoulli(p),
// then the noise tensor.
template <class T>
struct NoisePlan {
  std::vector<int> t;
  std::vector<std::uint8_t> drop;
  nn::Tensor<T> eps;
};

template <class T>
NoisePlan<T> plan_noise(Rng& rng, const nn::Shape& batch_shape, int timesteps, double cond_dropout);

// Simplified objective: mean (eps - eps_theta(x_t, t, c))^2 with dropped
// conditions replaced by zeros.
template <class T>
nn::Var diffusion_loss(nn::Graph<T>& g, Denoiser<T>& model, const nn::Tensor<T>& x0, const nn::Tensor<T>& cond,
                       const NoisePlan<T>& plan, const NoiseSchedule& sched);

// One optimizer step; throws NumericError on a non-finite loss.
template <class T>
double train_step(Denoiser<T>& model, nn::AdamW<T>& opt, const nn::Tensor<T>& x0, const nn::Tensor<T>& cond,
                  const NoisePlan<T>& plan, const NoiseSchedule& sched);

// ---- guidance and sampling ----

// eps_u + s (eps_c - eps_u); s == 1 returns eps_c without the null pass.
nn::Tensor<float> guided_eps(Denoiser<float>& model, const nn::Tensor<float>& x_t, const std::vector<int>& t,
                             const nn::Tensor<float>& cond, double s);

struct SampleConfig {
  double guidance_scale = 3.0;
  int steps = 0;  // 0 = every timestep of the schedule
  std::uint64_t seed = 0;
  int batch = 16;
};

// Timesteps visited, descending from T to 1.
std::vector<int> sampling_timesteps(int T, int steps);

// Ancestral sampling from N(0, I); item i draws from a generator seeded by
// (seed, i), so a (condition, seed, index) triple always yields the same image.
// Returns [N,3,H,W] clamped to [-1,1].
nn::Tensor<float> sample(Denoiser<float>& model, const nn::Tensor<float>& cond, const SampleConfig& cfg,
                         const NoiseSchedule& sched);

std::vector<ImageTensor> to_images(const nn::Tensor<float>& batch);

// ---- checkpoints ----

struct CheckpointInfo {
  DenoiserArch arch;
  ScheduleConfig schedule;
  TrainConfig train;
  nlohmann::json embedder_spec;
  std::string embedder_fingerprint;
  SchemeConfig scheme;
  std::string stage_name;  // "single", "stage1", "stage2"
  std::string parent_fingerprint;  // empty for a fresh start
  std::int64_t steps_done = 0;
};

nlohmann::json to_json(const CheckpointInfo& c);
CheckpointInfo checkpoint_info_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Denoiser<float>& model, const CheckpointInfo& info);

struct LoadedCheckpoint {
  Denoiser<float> model;
  CheckpointInfo info;
  NoiseSchedule schedule;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
// 16 hex chars of SHA-256 over the file bytes.
std::string file_fingerprint(const std::filesystem::path& path);

// ---- full training run ----

struct LossRecord {
  int step;         // global step across stages, 1-based
  std::string stage;
  double loss;
  int dropped;      // conditions replaced by null in this batch
};

struct AttackRun {
  std::vector<std::filesystem::path> checkpoints;
  std::vector<LossRecord> losses;
  long long conditions_seen = 0;
  long long conditions_dropped = 0;
};

struct AttackOptions {
  DenoiserArch arch;  // image_size and cond_dim are taken from data/embedder
  ScheduleConfig schedule;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  std::optional<std::filesystem::path> resume;  // warm start weights
  std::function<void(const LossRecord&)> on_step;
};

// Trains on `source` conditioned on embeddings of its encrypted images and
// writes checkpoints plus loss.csv into out_dir. Two-stage runs first train
// on scramble-only EtC, then continue from those weights on full EtC.
AttackRun train_attack(const PairSource& source, const Embedder& embedder, const AttackOptions& opts,
                       const std::filesystem::path& out_dir);

void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& losses);

// Trailing moving average with the given window.
std::vector<double> smooth(const std::vector<double>& v, int window);

}  // namespace cipherbreak::diffusion
