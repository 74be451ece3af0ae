#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cipherbreak/cli.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/keyed_rng.hpp"
#include "cipherbreak/synthetic.hpp"

using namespace cipherbreak;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cipherbreak::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cb_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string s(const fs::path& p) { return p.string(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kKeyHex = MasterKey::from_seed(77).to_hex();

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  auto r = invoke({"encrypt", "--frobnicate", "a.png", "b.png", "--scheme", "etc"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE((r.out + r.err).find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({}).code, cli::kUsage);
  EXPECT_EQ(invoke({"not-a-command"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"--help"}).code, cli::kOk);
  EXPECT_EQ(invoke({"encrypt", "--scheme", "xyz", "--key-hex", kKeyHex, "a.png", "b.png"}).code, cli::kUsage);
  EXPECT_EQ(invoke({"encrypt", "--scheme", "etc", "a.png", "b.png"}).code, cli::kUsage);  // no key
}

TEST(Cli, MissingInputExitsTwo) {
  const auto dir = scratch("missing");
  const auto r = invoke({"encrypt", "--scheme", "etc", "--key-hex", kKeyHex, s(dir / "none.png"), s(dir / "o.png")});
  EXPECT_EQ(r.code, cli::kData);
  EXPECT_NE(r.err.find("none.png"), std::string::npos);
}

TEST(Cli, EncryptDecryptRestoresPixelsAndNeverPrintsKey) {
  const auto dir = scratch("roundtrip");
  for (std::uint64_t i = 0; i < 3; ++i)
    write_png(dir / "in" / ("img" + std::to_string(i) + ".png"), synthetic::shapes_image(32, 1, i));
  for (const std::string scheme : {"etc", "pe", "le", "ele"}) {
    const auto enc = dir / ("enc_" + scheme), dec = dir / ("dec_" + scheme);
    auto r1 = invoke({"encrypt", "--scheme", scheme, "--key-hex", kKeyHex, s(dir / "in"), s(enc)});
    auto r2 = invoke({"decrypt", "--scheme", scheme, "--key-hex", kKeyHex, s(enc), s(dec)});
    ASSERT_EQ(r1.code, 0) << r1.err;
    ASSERT_EQ(r2.code, 0) << r2.err;
    for (std::uint64_t i = 0; i < 3; ++i) {
      const auto name = "img" + std::to_string(i) + ".png";
      EXPECT_EQ(read_png(dec / name), read_png(dir / "in" / name));
      EXPECT_NE(read_png(enc / name), read_png(dir / "in" / name));
    }
    for (const auto& text : {r1.out, r1.err, r2.out, r2.err, slurp(enc / "run-manifest.json")})
      EXPECT_EQ(text.find(kKeyHex), std::string::npos);
    EXPECT_NE(slurp(enc / "run-manifest.json").find(MasterKey::from_hex(kKeyHex).fingerprint()), std::string::npos);
  }
}

TEST(Cli, KeyFileAndDataRoot) {
  const auto root = scratch("root");
  write_png(root / "x.png", synthetic::shapes_image(32, 2, 0));
  ::setenv(cli::kDataRootEnv, root.c_str(), 1);
  EXPECT_EQ(invoke({"keygen", "--out", "k.key", "--from-seed", "4"}).code, 0);
  EXPECT_EQ(invoke({"encrypt", "--scheme", "etc", "--block", "16", "--key-file", "k.key", "x.png", "y.png"}).code, 0);
  EXPECT_EQ(invoke({"decrypt", "--scheme", "etc", "--block", "16", "--key-file", "k.key", "y.png", "z.png"}).code, 0);
  ::unsetenv(cli::kDataRootEnv);
  EXPECT_TRUE(fs::exists(root / "k.key"));
  EXPECT_EQ(read_key_file(root / "k.key"), MasterKey::from_seed(4));
  EXPECT_EQ(read_png(root / "z.png"), read_png(root / "x.png"));
}

TEST(Cli, RerunReproducesArtifactsByteExactly) {
  const auto dir = scratch("rerun");
  ASSERT_EQ(invoke({"--seed", "3", "make-dataset", "--synthetic", "12", "--size", "32", "--scheme", "etc", "--split", "0.75",
                 "--out", s(dir / "ds")})
                .code,
            0);
  ASSERT_EQ(invoke({"export-pairs", "--manifest", s(dir / "ds" / "manifest-train.json"), "--key-hex", kKeyHex, "--out",
                 s(dir / "frozen")})
                .code,
            0);
  const auto first = slurp(dir / "frozen" / "manifest.json");
  const auto enc_name = fs::directory_iterator(dir / "frozen" / "encrypted")->path().filename();
  const auto first_png = slurp(dir / "frozen" / "encrypted" / enc_name);
  fs::copy_file(dir / "frozen" / "run-manifest.json", dir / "export.json");
  fs::remove_all(dir / "frozen");
  // The key was redacted from the stored command line.
  EXPECT_EQ(invoke({"rerun", s(dir / "export.json")}).code, cli::kUsage);
  ASSERT_EQ(invoke({"rerun", s(dir / "export.json"), "--key-hex", kKeyHex}).code, 0);
  EXPECT_EQ(slurp(dir / "frozen" / "manifest.json"), first);
  EXPECT_EQ(slurp(dir / "frozen" / "encrypted" / enc_name), first_png);

  const auto m = nlohmann::json::parse(slurp(dir / "ds" / "run-manifest.json"));
  EXPECT_EQ(m.at("command"), "make-dataset");
  EXPECT_EQ(m.at("seed"), 3);
  EXPECT_EQ(m.at("version"), cli::kVersion);
}

TEST(Cli, SimilarityAndReport) {
  const auto dir = scratch("report");
  for (std::uint64_t i = 0; i < 6; ++i) write_png(dir / "plain" / ("p" + std::to_string(i) + ".png"), synthetic::shapes_image(32, 4, i));
  ASSERT_EQ(invoke({"similarity", "--images", s(dir / "plain"), "--scheme", "pe", "--keys", "3", "--out", s(dir / "sim")}).code, 0);
  const auto summary = nlohmann::json::parse(slurp(dir / "sim" / "summary.json"));
  EXPECT_EQ(summary.at("labels").size(), 4u);
  ASSERT_EQ(invoke({"score", "--plain", s(dir / "plain"), "--recon", s(dir / "plain"), "--out", s(dir / "score")}).code, 0);
  ASSERT_EQ(invoke({"report", s(dir / "score"), s(dir / "sim"), "--out", s(dir / "rep")}).code, 0);

  std::ifstream sm(dir / "rep" / "summary.csv");
  std::string line;
  int rows = 0;
  while (std::getline(sm, line)) ++rows;
  EXPECT_EQ(rows, 2);  // header + one box row

  std::ifstream hm(dir / "rep" / "similarity-sim.csv");
  std::vector<std::vector<std::string>> cells;
  while (std::getline(hm, line)) {
    std::stringstream ss(line);
    std::vector<std::string> r;
    std::string c;
    while (std::getline(ss, c, ',')) r.push_back(c);
    cells.push_back(r);
  }
  ASSERT_EQ(cells.size(), 5u);
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 1; j < 5; ++j) EXPECT_EQ(cells[i][j], cells[j][i]);

  const auto box = slurp(dir / "rep" / "box.png"), heat = slurp(dir / "rep" / "heatmap-sim.png");
  ASSERT_EQ(invoke({"report", s(dir / "score"), s(dir / "sim"), "--out", s(dir / "rep")}).code, 0);
  EXPECT_EQ(slurp(dir / "rep" / "box.png"), box);
  EXPECT_EQ(slurp(dir / "rep" / "heatmap-sim.png"), heat);

  const auto missing = invoke({"report", s(dir / "score"), s(dir / "nothing"), "--out", s(dir / "rep2")});
  EXPECT_EQ(missing.code, cli::kData);
  EXPECT_NE(missing.err.find("nothing"), std::string::npos);
}

TEST(Cli, DivergentTrainingExitsThree) {
  const auto dir = scratch("nan");
  ASSERT_EQ(invoke({"make-dataset", "--synthetic", "4", "--size", "16", "--scheme", "etc", "--split", "1", "--out", s(dir / "ds")}).code, 0);
  const auto r = invoke({"train-attack", "--manifest", s(dir / "ds" / "manifest-train.json"), "--out", s(dir / "att"),
                      "--steps", "30", "--batch", "2", "--lr", "1e12", "--timesteps", "20", "--base-width", "8",
                      "--embedder-kind", "random_projection", "--embedder-dim", "8", "--embedder-input", "16",
                      "--log-every", "0"});
  EXPECT_EQ(r.code, cli::kNumeric) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST(Cli, TrainingIsDeterministicUnderFixedSeeds) {
  const auto dir = scratch("det");
  ASSERT_EQ(invoke({"make-dataset", "--synthetic", "6", "--size", "16", "--scheme", "etc", "--split", "1", "--out", s(dir / "ds")}).code, 0);
  for (const std::string run : {"a", "b"}) {
    ASSERT_EQ(invoke({"--seed", "9", "train-attack", "--manifest", s(dir / "ds" / "manifest-train.json"), "--out",
                   s(dir / run), "--steps", "12", "--batch", "2", "--timesteps", "20", "--base-width", "8",
                   "--log-every", "0", "--embedder-dim", "16", "--embedder-input", "16"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(dir / "a" / "loss.csv"), slurp(dir / "b" / "loss.csv"));
  EXPECT_EQ(slurp(dir / "a" / "single.ckpt"), slurp(dir / "b" / "single.ckpt"));
}
