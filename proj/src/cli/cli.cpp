#include "cipherbreak/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "cipherbreak/ciphers.hpp"
#include "cipherbreak/dataset.hpp"
#include "cipherbreak/diffusion/attack.hpp"
#include "cipherbreak/embedder.hpp"
#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/keyed_rng.hpp"
#include "cipherbreak/nn/serialize.hpp"
#include "cipherbreak/perceptual.hpp"
#include "cipherbreak/plot.hpp"
#include "cipherbreak/similarity.hpp"
#include "cipherbreak/synthetic.hpp"

extern "C" void openblas_set_num_threads(int);

namespace cipherbreak::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRedacted = "<redacted>";

// ---- shared option bundles ----

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
};

struct KeyOptions {
  std::string key_file;
  std::string key_hex;

  void add(CLI::App* sub) {
    sub->add_option("--key-file", key_file, "Key file (hex, versioned)");
    sub->add_option("--key-hex", key_hex, "Key as 64 hex characters");
  }
  bool given() const { return !key_file.empty() || !key_hex.empty(); }
};

struct SchemeOptions {
  std::string scheme;
  int block = 0;
  bool scramble_only = false;

  void add(CLI::App* sub, bool required) {
    auto* o = sub->add_option("--scheme", scheme, "Cipher: le, pe, ele, etc");
    if (required) o->required();
    sub->add_option("--block", block, "EtC block size (default 8)");
    sub->add_flag("--scramble-only", scramble_only, "EtC/ELE block scrambling step only");
  }
  SchemeConfig config() const {
    SchemeConfig c = SchemeConfig::defaults(parse_scheme(scheme));
    if (block > 0) c.block_size = block;
    c.scramble_only = scramble_only;
    c.validate();
    return c;
  }
};

struct EmbedderOptions {
  std::string spec;
  std::string kind = "toy_conv";
  int dim = 768;
  std::uint64_t seed = 0;
  int input_size = 32;

  void add(CLI::App* sub) {
    sub->add_option("--embedder", spec, "Embedder spec JSON (overrides the options below)");
    sub->add_option("--embedder-kind", kind, "toy_conv or random_projection");
    sub->add_option("--embedder-dim", dim, "Embedding dimension");
    sub->add_option("--embedder-seed", seed, "Embedder weight seed");
    sub->add_option("--embedder-input", input_size, "Embedder input resolution");
  }
};

// ---- paths, fingerprints, run manifests ----

fs::path resolve(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv(kDataRootEnv); root && *root) return fs::path(root) / path;
  }
  return path;
}

std::string path_fingerprint(const fs::path& p) {
  if (!fs::exists(p)) return "missing";
  if (!fs::is_directory(p)) return diffusion::file_fingerprint(p);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file() && e.path().filename() != "run-manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string acc;
  for (const auto& f : files) acc += fs::relative(f, p).generic_string() + '\0' + diffusion::file_fingerprint(f) + '\n';
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(acc.data()), acc.size())).substr(0, 16);
}

std::vector<std::string> redact(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--key-hex" && i + 1 < args.size()) {
      out.push_back(args[i]);
      out.push_back(kRedacted);
      ++i;
    } else if (args[i].rfind("--key-hex=", 0) == 0) {
      out.push_back(std::string("--key-hex=") + kRedacted);
    } else {
      out.push_back(args[i]);
    }
  }
  return out;
}

struct RunContext {
  Globals globals;
  std::vector<std::string> argv;  // redacted
  std::ostream* out;
  std::ostream* err;
};

void write_run_manifest(const fs::path& path, const RunContext& ctx, const std::string& command, const json& config,
                        const std::vector<fs::path>& inputs) {
  json in = json::array();
  for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"fingerprint", path_fingerprint(p)}});
  const json m = {{"tool", "cipherbreak"}, {"version", kVersion},         {"command", command},
                  {"argv", ctx.argv},      {"config", config},            {"seed", ctx.globals.seed},
                  {"threads", ctx.globals.threads}, {"inputs", in}};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << m.dump(2) << "\n";
  if (!f) throw DataError("cannot write " + path.string());
}

std::optional<MasterKey> load_key(const KeyOptions& k) {
  if (!k.key_file.empty() && !k.key_hex.empty()) throw ArgumentError("give either --key-file or --key-hex, not both");
  if (!k.key_file.empty()) return read_key_file(resolve(k.key_file));
  if (!k.key_hex.empty()) {
    if (k.key_hex == kRedacted) throw ArgumentError("key was redacted from the stored run; pass --key-file or --key-hex");
    return MasterKey::from_hex(k.key_hex);
  }
  return std::nullopt;
}

MasterKey require_key(const KeyOptions& k) {
  auto key = load_key(k);
  if (!key) throw ArgumentError("a key is required: pass --key-file or --key-hex");
  return *key;
}

EmbedderSpec embedder_spec(const EmbedderOptions& o) {
  if (!o.spec.empty()) return read_embedder_spec(resolve(o.spec));
  EmbedderSpec s;
  s.kind = parse_embedder_kind(o.kind);
  s.d = o.dim;
  s.seed = o.seed;
  s.input_size = o.input_size;
  s.validate();
  return s;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ArgumentError("expected a comma-separated integer list, got '" + s + "'");
    }
  }
  if (out.empty()) throw ArgumentError("empty integer list");
  return out;
}

std::string stem_id(const fs::path& p) { return p.stem().string(); }

// Images of a directory (sorted by name), optionally limited.
std::pair<std::vector<std::string>, std::vector<ImageTensor>> load_dir(const fs::path& dir, int limit) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  auto files = list_png_files(dir);
  if (limit > 0 && static_cast<int>(files.size()) > limit) files.resize(static_cast<std::size_t>(limit));
  if (files.empty()) throw DataError("no PNG files in " + dir.string());
  std::vector<std::string> ids;
  std::vector<ImageTensor> imgs;
  for (const auto& f : files) {
    ids.push_back(stem_id(f));
    imgs.push_back(read_png(f));
  }
  return {ids, imgs};
}

// ---- CSV reading for report ----

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const fs::path& where) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(where.string() + ": not a number: '" + s + "'");
  }
}

std::vector<double> read_lpips_column(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.empty() || rows[0].size() < 2 || rows[0][1] != "lpips_proxy") throw DataError(path.string() + ": not a score file");
  std::vector<double> v;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) throw DataError(path.string() + ": short row " + std::to_string(i + 1));
    v.push_back(parse_double(rows[i][1], path));
  }
  if (v.empty()) throw DataError(path.string() + ": no scores");
  return v;
}

std::pair<std::vector<std::string>, Matrix> read_matrix_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) throw DataError(path.string() + ": empty matrix");
  const std::size_t n = rows.size() - 1;
  std::vector<std::string> labels;
  Matrix m;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != n + 1) throw DataError(path.string() + ": matrix is not square");
    labels.push_back(rows[i][0]);
    std::vector<double> r;
    for (std::size_t j = 1; j <= n; ++j) r.push_back(parse_double(rows[i][j], path));
    m.push_back(std::move(r));
  }
  return {labels, m};
}

// ---- commands ----

int cmd_keygen(const RunContext& ctx, const std::string& out, std::optional<std::uint64_t> from_seed) {
  const MasterKey key = from_seed ? MasterKey::from_seed(*from_seed) : MasterKey::random();
  const fs::path path = resolve(out);
  write_key_file(path, key);
  write_run_manifest(fs::path(path.string() + ".run-manifest.json"), ctx, "keygen",
                     {{"key_fingerprint", key.fingerprint()}, {"deterministic", from_seed.has_value()}}, {});
  *ctx.out << "wrote key " << path.string() << " (fingerprint " << key.fingerprint() << ")\n";
  return kOk;
}

int cmd_cipher(const RunContext& ctx, bool enc, const SchemeOptions& so, const KeyOptions& ko, const std::string& in,
               const std::string& out) {
  const SchemeConfig cfg = so.config();
  const MasterKey key = require_key(ko);
  const fs::path src = resolve(in), dst = resolve(out);
  const auto apply = [&](const ImageTensor& x) { return enc ? encrypt(x, key, cfg) : decrypt(x, key, cfg); };
  const json config = {{"scheme", to_json(cfg)}, {"key_fingerprint", key.fingerprint()}, {"direction", enc ? "encrypt" : "decrypt"}};
  int count = 0;
  if (fs::is_directory(src)) {
    fs::create_directories(dst);
    for (const auto& f : list_png_files(src)) {
      write_png(dst / f.filename(), apply(read_png(f)));
      ++count;
    }
    write_run_manifest(dst / "run-manifest.json", ctx, enc ? "encrypt" : "decrypt", config, {src});
  } else {
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    write_png(dst, apply(read_png(src)));
    count = 1;
    write_run_manifest(fs::path(dst.string() + ".run-manifest.json"), ctx, enc ? "encrypt" : "decrypt", config, {src});
  }
  *ctx.out << (enc ? "encrypted " : "decrypted ") << count << " image(s) with " << cfg.describe() << ", key "
           << key.fingerprint() << "\n";
  return kOk;
}

struct MakeDatasetOptions {
  std::string src, out;
  int synthetic = 0;
  int synthetic_size = 0;
  int size = 64;
  double split = 0.9;
  std::optional<std::uint64_t> split_seed;
  std::string key_policy = "per-epoch";
  std::optional<std::uint64_t> key_seed;
};

int cmd_make_dataset(const RunContext& ctx, const MakeDatasetOptions& o, const SchemeOptions& so, const KeyOptions& ko) {
  const SchemeConfig cfg = so.config();
  const fs::path out = resolve(o.out);
  fs::path src;
  if (o.synthetic > 0) {
    if (!o.src.empty()) throw ArgumentError("give either --src or --synthetic");
    src = out / "source";
    synthetic::write_shapes_dataset(src, o.synthetic, o.synthetic_size > 0 ? o.synthetic_size : o.size, ctx.globals.seed);
  } else {
    if (o.src.empty()) throw ArgumentError("make-dataset needs --src DIR or --synthetic COUNT");
    src = resolve(o.src);
  }
  KeyPolicy policy;
  if (o.key_policy == "fixed") {
    policy = KeyPolicy::fixed(require_key(ko));
  } else if (o.key_policy == "per-epoch") {
    if (ko.given()) throw ArgumentError("--key-file/--key-hex only apply to --key-policy fixed");
    policy = KeyPolicy::per_epoch(o.key_seed.value_or(ctx.globals.seed));
  } else {
    throw ArgumentError("--key-policy must be fixed or per-epoch");
  }
  const auto b = build_manifest(src, cfg, o.size, o.split, o.split_seed.value_or(ctx.globals.seed), policy, out);
  write_run_manifest(out / "run-manifest.json", ctx, "make-dataset",
                     {{"scheme", to_json(cfg)},
                      {"size", o.size},
                      {"split", o.split},
                      {"synthetic", o.synthetic},
                      {"key_policy", o.key_policy}},
                     {src});
  *ctx.out << "train " << b.train.entries.size() << ", val " << b.val.entries.size() << ", skipped " << b.skipped
           << " -> " << (out / "manifest-train.json").string() << "\n";
  for (const auto& f : b.skipped_files) *ctx.err << "skipped undecodable " << f << "\n";
  return kOk;
}

int cmd_export_pairs(const RunContext& ctx, const std::string& manifest, const KeyOptions& ko, const std::string& out,
                     std::optional<std::uint64_t> epoch) {
  const PairManifest m = read_manifest(resolve(manifest));
  MasterKey key;
  if (epoch) {
    key = epoch_key(m.key_policy, *epoch, load_key(ko));
  } else {
    key = require_key(ko);
  }
  const fs::path dst = resolve(out);
  const int n = export_pairs(m, key, dst);
  write_run_manifest(dst / "run-manifest.json", ctx, "export-pairs",
                     {{"key_fingerprint", key.fingerprint()}, {"epoch", epoch ? json(*epoch) : json()}},
                     {resolve(manifest)});
  *ctx.out << "exported " << n << " pairs under key " << key.fingerprint() << " -> " << dst.string() << "\n";
  return kOk;
}

int cmd_similarity(const RunContext& ctx, const std::string& images, const SchemeOptions& so, int keys,
                   const EmbedderOptions& eo, const std::string& out, int limit) {
  if (keys < 2) throw ArgumentError("--keys must be at least 2");
  const SchemeConfig cfg = so.config();
  const Embedder embedder(embedder_spec(eo));
  const auto [ids, imgs] = load_dir(resolve(images), limit);
  std::vector<MasterKey> ks;
  const MasterKey master = MasterKey::from_seed(ctx.globals.seed);
  for (int k = 0; k < keys; ++k) ks.push_back(derive_epoch_key(master, ctx.globals.seed, static_cast<std::uint64_t>(k)));
  const auto a = analyze_similarity(embedder, imgs, cfg, ks);
  const fs::path dst = resolve(out);
  fs::create_directories(dst);
  write_matrix_csv(dst / "similarity.csv", a.labels, a.mean_matrix);
  {
    std::ofstream f(dst / "per_image.csv");
    f << "id,cross_key,plain_vs_encrypted\n";
    for (std::size_t i = 0; i < ids.size(); ++i)
      f << ids[i] << "," << format_number(a.per_image_cross_key[i]) << "," << format_number(a.per_image_plain_vs_encrypted[i])
        << "\n";
  }
  json summary = to_json(a);
  summary["scheme"] = to_json(cfg);
  summary["embedder_fingerprint"] = embedder.fingerprint();
  json fps = json::array();
  for (const auto& k : ks) fps.push_back(k.fingerprint());
  summary["key_fingerprints"] = fps;
  {
    std::ofstream f(dst / "summary.json");
    f << summary.dump(2) << "\n";
  }
  write_run_manifest(dst / "run-manifest.json", ctx, "similarity",
                     {{"scheme", to_json(cfg)}, {"keys", keys}, {"embedder", to_json(embedder.spec())}, {"limit", limit}},
                     {resolve(images)});
  *ctx.out << cfg.describe() << ": cross-key " << format_number(a.cross_key) << ", plain-vs-encrypted "
           << format_number(a.plain_vs_encrypted) << ", unrelated plain " << format_number(a.unrelated_plain) << "\n";
  return kOk;
}

struct TrainEmbedderOptions {
  std::string images, out;
  int dim = 768;
  int input_size = 32;
  int limit = 0;
  ContrastiveConfig cfg;
};

int cmd_train_embedder(const RunContext& ctx, TrainEmbedderOptions o) {
  const auto [ids, imgs] = load_dir(resolve(o.images), o.limit);
  o.cfg.seed = ctx.globals.seed;
  ToyConvNet net(o.dim, ctx.globals.seed);
  const fs::path dst = resolve(o.out);
  fs::create_directories(dst);
  const auto losses = train_contrastive(net, imgs, o.input_size, o.cfg);
  for (std::size_t i = 0; i < losses.size(); ++i)
    if ((i + 1) % 100 == 0 || i + 1 == losses.size())
      *ctx.err << "step " << i + 1 << " loss " << format_number(losses[i]) << "\n";
  EmbedderSpec spec;
  spec.kind = EmbedderKind::ToyConv;
  spec.d = o.dim;
  spec.seed = ctx.globals.seed;
  spec.input_size = o.input_size;
  spec.weights = dst / "embedder.params";
  nn::save_parameters(spec.weights, net.params(), {{"kind", "toy_conv"}, {"contrastive", true}});
  write_embedder_spec(dst / "embedder.json", spec);
  {
    std::ofstream f(dst / "loss.csv");
    f << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) f << i + 1 << "," << format_number(losses[i]) << "\n";
  }
  const Embedder check(read_embedder_spec(dst / "embedder.json"));
  write_run_manifest(dst / "run-manifest.json", ctx, "train-embedder",
                     {{"dim", o.dim},
                      {"input_size", o.input_size},
                      {"steps", o.cfg.steps},
                      {"batch", o.cfg.batch},
                      {"lr", o.cfg.lr},
                      {"temperature", o.cfg.temperature},
                      {"embedder_fingerprint", check.fingerprint()}},
                     {resolve(o.images)});
  *ctx.out << "wrote " << (dst / "embedder.json").string() << " (fingerprint " << check.fingerprint() << ")\n";
  return kOk;
}

struct TrainAttackOptions {
  std::string manifest, out, resume;
  diffusion::TrainConfig train;
  std::string stage = "single";
  int timesteps = 200;
  int base_width = 16;
  std::string width_mults = "1,2,2";
  std::uint64_t init_seed = 0;
  int log_every = 100;
};

int cmd_train_attack(const RunContext& ctx, TrainAttackOptions o, const KeyOptions& ko, const EmbedderOptions& eo) {
  using namespace diffusion;
  const fs::path mpath = resolve(o.manifest);
  const PairManifest m = read_manifest(mpath);
  const PairSource source(m, load_key(ko));
  const Embedder embedder(embedder_spec(eo));
  AttackOptions opts;
  opts.arch.base_width = o.base_width;
  opts.arch.width_mults = parse_int_list(o.width_mults);
  opts.schedule.T = o.timesteps;
  opts.train = o.train;
  opts.train.stage = parse_stage(o.stage);
  opts.train.seed = ctx.globals.seed;
  opts.init_seed = o.init_seed;
  if (!o.resume.empty()) opts.resume = resolve(o.resume);
  double acc = 0;
  int acc_n = 0;
  opts.on_step = [&](const LossRecord& r) {
    acc += r.loss;
    ++acc_n;
    if (o.log_every > 0 && r.step % o.log_every == 0) {
      *ctx.err << r.stage << " step " << r.step << " loss " << format_number(acc / acc_n) << "\n";
      acc = 0;
      acc_n = 0;
    }
  };
  const fs::path dst = resolve(o.out);
  fs::create_directories(dst);
  std::vector<fs::path> inputs{mpath, m.root / "plain"};
  if (!embedder.spec().weights.empty()) inputs.push_back(embedder.spec().weights);
  if (opts.resume) inputs.push_back(*opts.resume);
  const auto run = train_attack(source, embedder, opts, dst);
  write_run_manifest(dst / "run-manifest.json", ctx, "train-attack",
                     {{"train", to_json(opts.train)},
                      {"schedule", to_json(opts.schedule)},
                      {"arch", {{"base_width", o.base_width}, {"width_mults", opts.arch.width_mults}}},
                      {"init_seed", o.init_seed},
                      {"embedder", to_json(embedder.spec())},
                      {"embedder_fingerprint", embedder.fingerprint()},
                      {"conditions_seen", run.conditions_seen},
                      {"conditions_dropped", run.conditions_dropped}},
                     inputs);
  for (const auto& c : run.checkpoints)
    *ctx.out << "wrote " << c.string() << " (fingerprint " << file_fingerprint(c) << ")\n";
  *ctx.out << "final loss " << format_number(run.losses.back().loss) << ", dropped " << run.conditions_dropped << "/"
           << run.conditions_seen << " conditions\n";
  return kOk;
}

struct AttackCmdOptions {
  std::string checkpoint, encrypted, out;
  diffusion::SampleConfig sample;
  bool unconditional = false;
  int limit = 0;
};

int cmd_attack(const RunContext& ctx, AttackCmdOptions o, const EmbedderOptions& eo) {
  using namespace diffusion;
  const fs::path ckpt = resolve(o.checkpoint);
  auto loaded = load_checkpoint(ckpt);
  const EmbedderSpec spec =
      eo.spec.empty() ? embedder_spec_from_json(loaded.info.embedder_spec, ckpt.parent_path()) : embedder_spec(eo);
  const Embedder embedder(spec);
  if (embedder.fingerprint() != loaded.info.embedder_fingerprint) {
    throw DataError("embedder fingerprint " + embedder.fingerprint() + " differs from the checkpoint's " +
                    loaded.info.embedder_fingerprint + "; pass the training embedder with --embedder");
  }
  o.sample.seed = ctx.globals.seed;
  const auto [ids, imgs] = load_dir(resolve(o.encrypted), o.limit);
  nn::Tensor<float> cond({static_cast<int>(imgs.size()), embedder.dim()});
  if (!o.unconditional) cond = condition_batch(embedder.embed_batch(imgs));
  const auto out = to_images(sample(loaded.model, cond, o.sample, loaded.schedule));
  const fs::path dst = resolve(o.out);
  fs::create_directories(dst);
  for (std::size_t i = 0; i < ids.size(); ++i) write_png(dst / (ids[i] + ".png"), out[i]);
  write_run_manifest(dst / "run-manifest.json", ctx, "attack",
                     {{"guidance_scale", o.sample.guidance_scale},
                      {"sample_steps", o.sample.steps},
                      {"batch", o.sample.batch},
                      {"unconditional", o.unconditional},
                      {"checkpoint_fingerprint", file_fingerprint(ckpt)},
                      {"embedder_fingerprint", embedder.fingerprint()}},
                     {ckpt, resolve(o.encrypted)});
  *ctx.out << (o.unconditional ? "sampled " : "reconstructed ") << ids.size() << " image(s) -> " << dst.string() << "\n";
  return kOk;
}

int cmd_score(const RunContext& ctx, const std::string& plain, const std::string& recon, const std::string& out,
              const std::string& label, const EmbedderOptions& eo) {
  const EmbedderSpec spec = embedder_spec(eo);
  if (spec.kind != EmbedderKind::ToyConv) throw ArgumentError("the LPIPS-proxy needs a toy_conv embedder");
  const Embedder embedder(spec);
  const FeatureNet net = FeatureNet::from_embedder(embedder);
  const auto r = score_dir(net, resolve(plain), resolve(recon));
  const fs::path dst = resolve(out);
  fs::create_directories(dst);
  write_scores_csv(dst / "scores.csv", r);
  write_summary_csv(dst / "summary.csv", {label}, {r.summary});
  write_run_manifest(dst / "run-manifest.json", ctx, "score",
                     {{"metric", "lpips_proxy"}, {"label", label}, {"embedder_fingerprint", embedder.fingerprint()}},
                     {resolve(plain), resolve(recon)});
  *ctx.out << label << ": LPIPS-proxy mean " << format_number(r.summary.mean) << ", median "
           << format_number(r.summary.median) << " over " << r.summary.count << " images\n";
  return kOk;
}

int cmd_report(const RunContext& ctx, const std::vector<std::string>& runs, const std::string& out) {
  const fs::path dst = resolve(out);
  std::vector<std::string> labels;
  std::vector<BoxSummary> rows;
  std::vector<std::string> problems;
  std::vector<fs::path> inputs;
  int heatmaps = 0;
  fs::create_directories(dst);
  json index = json::array();
  for (const auto& r : runs) {
    const fs::path dir = resolve(r);
    const std::string label = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    bool found = false;
    if (fs::exists(dir / "scores.csv")) {
      rows.push_back(summarize(read_lpips_column(dir / "scores.csv")));
      labels.push_back(label);
      inputs.push_back(dir / "scores.csv");
      index.push_back({{"run", label}, {"scores", "summary.csv"}});
      found = true;
    }
    if (fs::exists(dir / "similarity.csv")) {
      const auto [names, m] = read_matrix_csv(dir / "similarity.csv");
      for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < m.size(); ++j)
          if (m[i][j] != m[j][i]) throw DataError((dir / "similarity.csv").string() + ": matrix is not symmetric");
      write_matrix_csv(dst / ("similarity-" + label + ".csv"), names, m);
      write_png(dst / ("heatmap-" + label + ".png"), plot::heatmap(m, names));
      inputs.push_back(dir / "similarity.csv");
      ++heatmaps;
      index.push_back({{"run", label}, {"heatmap", "heatmap-" + label + ".png"}});
      found = true;
    }
    if (!found) problems.push_back(dir.string() + ": no scores.csv or similarity.csv");
  }
  if (!problems.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  if (!rows.empty()) {
    write_summary_csv(dst / "summary.csv", labels, rows);
    write_png(dst / "box.png", plot::box_plot(labels, rows));
  }
  {
    std::ofstream f(dst / "report.json");
    f << json{{"metric", "lpips_proxy"}, {"artifacts", index}}.dump(2) << "\n";
  }
  write_run_manifest(dst / "run-manifest.json", ctx, "report", {{"runs", runs}}, inputs);
  *ctx.out << "report: " << rows.size() << " score row(s), " << heatmaps << " heatmap(s) -> "
           << dst.string() << "\n";
  return kOk;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth);

int cmd_rerun(const std::string& manifest, const KeyOptions& ko, std::ostream& out, std::ostream& err, int depth) {
  if (depth > 0) throw ArgumentError("rerun cannot be nested");
  std::ifstream in(resolve(manifest));
  if (!in) throw DataError("cannot open " + manifest);
  json m;
  try {
    in >> m;
  } catch (const json::exception& e) {
    throw DataError(manifest + ": " + e.what());
  }
  auto args = m.at("argv").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--key-hex" && i + 1 < args.size() && args[i + 1] == kRedacted) {
      if (!ko.given()) throw ArgumentError("stored run used a redacted key; pass --key-file or --key-hex");
      args[i] = ko.key_file.empty() ? "--key-hex" : "--key-file";
      args[i + 1] = ko.key_file.empty() ? ko.key_hex : ko.key_file;
    }
  }
  return dispatch(args, out, err, depth + 1);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, int depth) {
  CLI::App app{"cipherbreak: learnable image encryption ciphers and a diffusion reconstruction attack", "cipherbreak"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_version_flag("--version", kVersion);
  RunContext ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.argv = redact(args);
  app.add_option("--seed", ctx.globals.seed, "Seed for every non-key random choice")->capture_default_str();
  app.add_option("--threads", ctx.globals.threads, "Thread cap for BLAS kernels")->check(CLI::PositiveNumber)->capture_default_str();

  const auto sub = [&](const char* name, const char* desc) {
    auto* s = app.add_subcommand(name, desc);
    s->fallthrough();
    return s;
  };

  // keygen
  std::string keygen_out;
  std::optional<std::uint64_t> keygen_seed;
  auto* keygen = sub("keygen", "Write a new master key file");
  keygen->add_option("--out", keygen_out, "Key file path")->required();
  keygen->add_option("--from-seed", keygen_seed, "Derive the key from a seed instead of the OS entropy source");

  // encrypt / decrypt
  SchemeOptions cipher_scheme;
  KeyOptions cipher_key;
  std::string cipher_in, cipher_out;
  CLI::App* cipher_cmds[2];
  for (int i = 0; i < 2; ++i) {
    auto* c = sub(i == 0 ? "encrypt" : "decrypt", i == 0 ? "Encrypt a PNG (or a directory of PNGs)"
                                                           : "Decrypt a PNG (or a directory of PNGs)");
    cipher_scheme.add(c, true);
    cipher_key.add(c);
    c->add_option("input", cipher_in, "Input PNG or directory")->required();
    c->add_option("output", cipher_out, "Output PNG or directory")->required();
    cipher_cmds[i] = c;
  }

  // make-dataset
  MakeDatasetOptions md;
  SchemeOptions md_scheme;
  KeyOptions md_key;
  auto* make_ds = sub("make-dataset", "Build a paired-dataset manifest from a PNG folder");
  make_ds->add_option("--src", md.src, "Source PNG directory");
  make_ds->add_option("--synthetic", md.synthetic, "Generate this many synthetic-shapes images instead of --src");
  make_ds->add_option("--synthetic-size", md.synthetic_size, "Resolution of generated images (default --size)");
  make_ds->add_option("--out", md.out, "Dataset root")->required();
  make_ds->add_option("--size", md.size, "Plain image resolution")->capture_default_str();
  make_ds->add_option("--split", md.split, "Train fraction")->capture_default_str();
  make_ds->add_option("--split-seed", md.split_seed, "Split shuffle seed (default --seed)");
  make_ds->add_option("--key-policy", md.key_policy, "per-epoch or fixed")->capture_default_str();
  make_ds->add_option("--key-seed", md.key_seed, "Per-epoch key seed (default --seed)");
  md_scheme.add(make_ds, true);
  md_key.add(make_ds);

  // export-pairs
  std::string ex_manifest, ex_out;
  std::optional<std::uint64_t> ex_epoch;
  KeyOptions ex_key;
  auto* export_cmd = sub("export-pairs", "Freeze plain/encrypted pairs under one key");
  export_cmd->add_option("--manifest", ex_manifest, "Manifest JSON")->required();
  export_cmd->add_option("--out", ex_out, "Output directory")->required();
  export_cmd->add_option("--epoch", ex_epoch, "Use the key of this training epoch instead of --key-*");
  ex_key.add(export_cmd);

  // similarity
  std::string sim_images, sim_out;
  int sim_keys = 2, sim_limit = 0;
  SchemeOptions sim_scheme;
  EmbedderOptions sim_emb;
  auto* sim = sub("similarity", "Embedding similarity between plain and differently keyed encryptions");
  sim->add_option("--images", sim_images, "Plain PNG directory")->required();
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--keys", sim_keys, "Number of keys")->capture_default_str();
  sim->add_option("--limit", sim_limit, "Use at most this many images (0 = all)");
  sim_scheme.add(sim, true);
  sim_emb.add(sim);

  // train-embedder
  TrainEmbedderOptions te;
  auto* train_emb = sub("train-embedder", "Contrastively train the toy_conv embedder on plain images");
  train_emb->add_option("--images", te.images, "Plain PNG directory")->required();
  train_emb->add_option("--out", te.out, "Output directory")->required();
  train_emb->add_option("--dim", te.dim, "Embedding dimension")->capture_default_str();
  train_emb->add_option("--input-size", te.input_size, "Input resolution")->capture_default_str();
  train_emb->add_option("--steps", te.cfg.steps, "Optimizer steps")->capture_default_str();
  train_emb->add_option("--batch", te.cfg.batch, "Images per step")->capture_default_str();
  train_emb->add_option("--lr", te.cfg.lr, "Learning rate")->capture_default_str();
  train_emb->add_option("--temperature", te.cfg.temperature, "Contrastive temperature")->capture_default_str();
  train_emb->add_option("--limit", te.limit, "Use at most this many images (0 = all)");

  // train-attack
  TrainAttackOptions ta;
  KeyOptions ta_key;
  EmbedderOptions ta_emb;
  auto* train_att = sub("train-attack", "Train the conditional diffusion attack");
  train_att->add_option("--manifest", ta.manifest, "Train-split manifest")->required();
  train_att->add_option("--out", ta.out, "Output directory")->required();
  train_att->add_option("--steps", ta.train.steps, "Steps per stage")->capture_default_str();
  train_att->add_option("--batch", ta.train.batch, "Batch size")->capture_default_str();
  train_att->add_option("--lr", ta.train.lr, "AdamW learning rate")->capture_default_str();
  train_att->add_option("--weight-decay", ta.train.weight_decay, "AdamW weight decay")->capture_default_str();
  train_att->add_option("--cond-dropout", ta.train.cond_dropout, "Condition dropout rate")->capture_default_str();
  train_att->add_option("--ema-decay", ta.train.ema_decay, "Weight averaging decay for checkpoints (0 = off)")
      ->capture_default_str();
  train_att->add_option("--stage", ta.stage, "single or two_stage_etc")->capture_default_str();
  train_att->add_option("--timesteps", ta.timesteps, "Diffusion steps T")->capture_default_str();
  train_att->add_option("--base-width", ta.base_width, "U-Net base channels")->capture_default_str();
  train_att->add_option("--width-mults", ta.width_mults, "Channel multipliers per level")->capture_default_str();
  train_att->add_option("--init-seed", ta.init_seed, "Weight initialization seed")->capture_default_str();
  train_att->add_option("--resume", ta.resume, "Warm-start from a checkpoint");
  train_att->add_option("--log-every", ta.log_every, "Progress interval in steps (0 = quiet)")->capture_default_str();
  ta_key.add(train_att);
  ta_emb.add(train_att);

  // attack
  AttackCmdOptions at;
  EmbedderOptions at_emb;
  auto* attack = sub("attack", "Reconstruct a directory of encrypted images");
  attack->add_option("--checkpoint", at.checkpoint, "Trained checkpoint")->required();
  attack->add_option("--encrypted", at.encrypted, "Encrypted PNG directory")->required();
  attack->add_option("--out", at.out, "Output directory")->required();
  attack->add_option("--guidance-scale", at.sample.guidance_scale, "Classifier-free guidance scale s >= 1")
      ->capture_default_str();
  attack->add_option("--sample-steps", at.sample.steps, "Sampling timesteps (0 = full chain)")->capture_default_str();
  attack->add_option("--batch", at.sample.batch, "Images sampled together")->capture_default_str();
  attack->add_flag("--unconditional", at.unconditional, "Ignore the inputs' embeddings (null condition)");
  attack->add_option("--limit", at.limit, "Use at most this many images (0 = all)");
  at_emb.add(attack);

  // score
  std::string sc_plain, sc_recon, sc_out, sc_label = "run";
  EmbedderOptions sc_emb;
  auto* score = sub("score", "LPIPS-proxy and pixel baselines between matching PNGs");
  score->add_option("--plain", sc_plain, "Reference PNG directory")->required();
  score->add_option("--recon", sc_recon, "Reconstruction PNG directory")->required();
  score->add_option("--out", sc_out, "Output directory")->required();
  score->add_option("--label", sc_label, "Row label for the summary")->capture_default_str();
  sc_emb.add(score);

  // report
  std::vector<std::string> rp_runs;
  std::string rp_out;
  auto* report = sub("report", "Aggregate score and similarity CSVs into tables and plots");
  report->add_option("runs", rp_runs, "Run directories")->required();
  report->add_option("--out", rp_out, "Output directory")->required();

  // rerun
  std::string rr_manifest;
  KeyOptions rr_key;
  auto* rerun = sub("rerun", "Repeat the command recorded in a run-manifest.json");
  rerun->add_option("manifest", rr_manifest, "run-manifest.json")->required();
  rr_key.add(rerun);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  openblas_set_num_threads(ctx.globals.threads);

  if (keygen->parsed()) return cmd_keygen(ctx, keygen_out, keygen_seed);
  if (cipher_cmds[0]->parsed()) return cmd_cipher(ctx, true, cipher_scheme, cipher_key, cipher_in, cipher_out);
  if (cipher_cmds[1]->parsed()) return cmd_cipher(ctx, false, cipher_scheme, cipher_key, cipher_in, cipher_out);
  if (make_ds->parsed()) return cmd_make_dataset(ctx, md, md_scheme, md_key);
  if (export_cmd->parsed()) return cmd_export_pairs(ctx, ex_manifest, ex_key, ex_out, ex_epoch);
  if (sim->parsed()) return cmd_similarity(ctx, sim_images, sim_scheme, sim_keys, sim_emb, sim_out, sim_limit);
  if (train_emb->parsed()) return cmd_train_embedder(ctx, te);
  if (train_att->parsed()) return cmd_train_attack(ctx, ta, ta_key, ta_emb);
  if (attack->parsed()) return cmd_attack(ctx, at, at_emb);
  if (score->parsed()) return cmd_score(ctx, sc_plain, sc_recon, sc_out, sc_label, sc_emb);
  if (report->parsed()) return cmd_report(ctx, rp_runs, rp_out);
  if (rerun->parsed()) return cmd_rerun(rr_manifest, rr_key, out, err, depth);
  err << app.help();
  return kUsage;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err, 0);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n(run with --help for usage)\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n(try a lower --lr or check the inputs for corrupt images)\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: malformed JSON: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace cipherbreak::cli
