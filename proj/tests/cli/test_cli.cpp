#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "voxelsr/checkpoint.hpp"
#include "voxelsr/volume.hpp"

using namespace voxelsr;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "voxelsr");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> out;
  std::istringstream is(row);
  for (std::string f; std::getline(is, f, ',');) out.push_back(f);
  return out;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("voxelsr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Two tiny phantoms in data/ and a matching config; returns the config path.
  std::string tiny_setup(const std::string& extra = "") {
    fs::create_directories(dir_ / "data");
    for (int s : {1, 2}) {
      EXPECT_EQ(run({"phantom", "--dims", "8,8,8", "--seed", std::to_string(s), "--out",
                     path("data/p" + std::to_string(s) + ".vxr")})
                    .code,
                0);
    }
    std::ofstream cfg(dir_ / "train.cfg");
    cfg << "scale_min = 2.0\nscale_max = 2.5\npatch_lr = 6,6,3\nepochs = 2\nsteps_per_epoch = 2\nlr = 0.001\n"
           "seed = 3\ncode_length = 4\nchannels = 3\nblocks = 1\nlayers_per_block = 2\nhidden = 8\n"
        << extra;
    return path("train.cfg");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("phantom"), std::string::npos);
}

TEST_F(Cli, NoSubcommandIsUsageError) { EXPECT_EQ(run({}).code, cli::kExitUsage); }

TEST_F(Cli, PhantomIsDeterministic) {
  ASSERT_EQ(run({"phantom", "--kind", "ramp", "--dims", "32,32,32", "--out", path("a.vxr")}).code, 0);
  ASSERT_EQ(run({"phantom", "--kind", "ramp", "--dims", "32,32,32", "--out", path("b.vxr")}).code, 0);
  EXPECT_EQ(slurp(path("a.vxr")), slurp(path("b.vxr")));
  EXPECT_EQ(load_volume(path("a.vxr")).dims(), (Dims{32, 32, 32}));
}

TEST_F(Cli, PhantomMissingOutIsUsageError) {
  const auto r = run({"phantom", "--kind", "ramp"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--out"), std::string::npos);
}

TEST_F(Cli, PhantomInvalidKind) {
  const auto r = run({"phantom", "--kind", "torus", "--out", path("a.vxr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("torus"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("a.vxr")));
}

TEST_F(Cli, PhantomPerSliceSigma) {
  EXPECT_EQ(run({"phantom", "--dims", "16,16,4", "--sigma", "0.01,0.05,0.01,0.05", "--out", path("a.vxr")}).code, 0);
  EXPECT_EQ(run({"phantom", "--dims", "16,16,4", "--sigma", "0.01,0.05,0.01", "--out", path("b.vxr")}).code,
            cli::kExitUsage);
}

TEST_F(Cli, BadDimsIsUsageError) {
  EXPECT_EQ(run({"phantom", "--dims", "16,16", "--out", path("a.vxr")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"phantom", "--dims", "16,x,4", "--out", path("a.vxr")}).code, cli::kExitUsage);
}

TEST_F(Cli, DownsampleKeepsEveryKthSlice) {
  ASSERT_EQ(run({"phantom", "--dims", "8,8,10", "--out", path("a.vxr")}).code, 0);
  ASSERT_EQ(run({"downsample", "--in", path("a.vxr"), "--factor", "3", "--out", path("b.vxr")}).code, 0);
  const auto a = load_volume(path("a.vxr")), b = load_volume(path("b.vxr"));
  ASSERT_EQ(b.dims().z, 4);
  for (std::int64_t k = 0; k < 4; ++k) {
    const auto sa = a.slice(3 * k), sb = b.slice(k);
    EXPECT_TRUE(std::equal(sa.begin(), sa.end(), sb.begin()));
  }
}

TEST_F(Cli, TrainTwiceGivesIdenticalCheckpoints) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run1")}).code, 0);
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run2")}).code, 0);
  const auto a = slurp(path("run1/model.mdl"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("run2/model.mdl")));
  EXPECT_EQ(slurp(path("run1/loss.csv")), slurp(path("run2/loss.csv")));
  EXPECT_EQ(slurp(path("run1/config.txt")), slurp(path("run2/config.txt")));
}

TEST_F(Cli, TrainLossCsvRows) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  const auto rows = lines(slurp(path("run/loss.csv")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "epoch,step,loss_inr,loss_cycle,loss_total,lr");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GT(std::stod(split(rows[i])[3]), 0.0);
}

TEST_F(Cli, NoCclRecordsZeroCycleLoss) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run"), "--no-ccl"}).code, 0);
  const auto rows = lines(slurp(path("run/loss.csv")));
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(split(rows[i])[3], "0") << rows[i];
  EXPECT_NE(slurp(path("run/config.txt")).find("lambda = 0"), std::string::npos);
}

TEST_F(Cli, NoLamDropsAttention) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run"), "--no-lam"}).code, 0);
  const auto p = load_model(path("run/model.mdl"));
  EXPECT_FALSE(p.config.use_lam);
  for (const auto& [name, t] : p.named()) EXPECT_EQ(name.rfind("attention.", 0), std::string::npos) << name;
}

TEST_F(Cli, LrScheduleInCsv) {
  const auto cfg = tiny_setup("epochs = 3\nlr_half_every = 2\n");
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  const auto rows = lines(slurp(path("run/loss.csv")));
  ASSERT_EQ(rows.size(), 7u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto f = split(rows[i]);
    EXPECT_EQ(std::stod(f[5]), std::stoi(f[0]) < 2 ? 1e-3 : 5e-4) << rows[i];
  }
}

TEST_F(Cli, CheckpointsWritten) {
  const auto cfg = tiny_setup("checkpoint_every = 1\n");
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  EXPECT_TRUE(fs::exists(path("run/checkpoint_epoch00001.mdl")));
  EXPECT_EQ(slurp(path("run/checkpoint_epoch00002.mdl")), slurp(path("run/model.mdl")));
}

TEST_F(Cli, DivergenceExitsThree) {
  const auto cfg = tiny_setup("lr = 1e30\nepochs = 4\n");
  const auto r = run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")});
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.err;
  EXPECT_NE(r.err.find("diverged"), std::string::npos);
}

TEST_F(Cli, TrainConfigErrors) {
  const auto cfg = tiny_setup("learning_rate = 1\n");
  EXPECT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--config", path("nope.cfg"), "--data", path("data"), "--out", path("run")}).code,
            cli::kExitUsage);
  fs::create_directories(dir_ / "empty");
  std::ofstream(dir_ / "ok.cfg") << "epochs = 1\n";
  EXPECT_EQ(run({"train", "--config", path("ok.cfg"), "--data", path("empty"), "--out", path("run")}).code,
            cli::kExitUsage);
}

TEST_F(Cli, InferArbitraryScalesFromOneModel) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  ASSERT_EQ(run({"phantom", "--dims", "8,8,9", "--seed", "5", "--out", path("lr.vxr")}).code, 0);
  const std::vector<std::pair<std::string, std::int64_t>> cases{{"2.5", 21}, {"2.0", 17}, {"5.0", 41}};
  for (const auto& [scale, depth] : cases) {
    const auto out = path("hr_" + scale + ".vxr");
    const auto r = run({"infer", "--model", path("run/model.mdl"), "--in", path("lr.vxr"), "--scale", scale, "--out",
                        out, "--patch", "8,8,4"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto v = load_volume(out);
    EXPECT_EQ(v.dims(), (Dims{8, 8, depth})) << scale;
    for (float f : v.voxels()) EXPECT_TRUE(std::isfinite(f));
  }
}

TEST_F(Cli, InferIsBitReproducible) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  for (const auto* name : {"a.vxr", "b.vxr"}) {
    ASSERT_EQ(run({"infer", "--model", path("run/model.mdl"), "--in", path("data/p1.vxr"), "--scale", "3.3", "--out",
                   path(name), "--patch", "6,6,4", "--overlap", "0.5"})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(path("a.vxr")), slurp(path("b.vxr")));
}

TEST_F(Cli, InferErrors) {
  ASSERT_EQ(run({"phantom", "--dims", "8,8,9", "--out", path("lr.vxr")}).code, 0);
  const auto missing = path("missing.mdl");
  auto r = run({"infer", "--model", missing, "--in", path("lr.vxr"), "--scale", "2", "--out", path("o.vxr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find(missing), std::string::npos);
  r = run({"infer", "--model", missing, "--in", path("lr.vxr"), "--scale", "1", "--out", path("o.vxr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  r = run({"infer", "--model", missing, "--in", path("lr.vxr"), "--scale", "0.5", "--out", path("o.vxr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  std::ofstream(path("junk.mdl")) << "not a model";
  r = run({"infer", "--model", path("junk.mdl"), "--in", path("lr.vxr"), "--scale", "2", "--out", path("o.vxr")});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("MDL1"), std::string::npos);
}

TEST_F(Cli, EvalIdenticalVolumes) {
  ASSERT_EQ(run({"phantom", "--dims", "16,16,4", "--sigma", "0.02", "--out", path("x.vxr")}).code, 0);
  const auto r = run({"eval", "--ref", path("x.vxr"), "--test", path("x.vxr")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(r.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "method,scale,psnr_db,ssim,snli,runtime_s");
  const auto f = split(rows[1]);
  EXPECT_EQ(f[2], "inf");
  EXPECT_EQ(f[3], "1");
}

TEST_F(Cli, EvalThreeMethodsThreeRows) {
  const auto cfg = tiny_setup();
  ASSERT_EQ(run({"train", "--config", cfg, "--data", path("data"), "--out", path("run")}).code, 0);
  ASSERT_EQ(run({"phantom", "--dims", "16,16,13", "--out", path("hr.vxr")}).code, 0);
  ASSERT_EQ(run({"downsample", "--in", path("hr.vxr"), "--factor", "3", "--out", path("lr.vxr")}).code, 0);
  std::vector<std::string> args{"eval",     "--ref",   path("hr.vxr"),         "--lr",    path("lr.vxr"),
                                "--method", "cubic,trilinear,cycleinr",        "--model", path("run/model.mdl"),
                                "--patch",  "8,8,4",   "--out"};
  auto a = args, b = args;
  a.push_back(path("a.csv"));
  b.push_back(path("b.csv"));
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  const auto text = slurp(path("a.csv"));
  EXPECT_EQ(text, slurp(path("b.csv")));
  const auto rows = lines(text);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(split(rows[1])[0], "cubic");
  EXPECT_EQ(split(rows[2])[0], "trilinear");
  EXPECT_EQ(split(rows[3])[0], "cycleinr");
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_EQ(std::stod(split(rows[i])[1]), 3.0);
    EXPECT_EQ(split(rows[i])[5], "0");
  }
}

TEST_F(Cli, EvalArgumentErrors) {
  ASSERT_EQ(run({"phantom", "--dims", "16,16,4", "--out", path("x.vxr")}).code, 0);
  EXPECT_EQ(run({"eval", "--ref", path("x.vxr")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--ref", path("x.vxr"), "--lr", path("x.vxr"), "--method", "bicubic"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--ref", path("x.vxr"), "--lr", path("x.vxr"), "--method", "cycleinr"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--ref", path("nope.vxr"), "--test", path("x.vxr")}).code, cli::kExitUsage);
}

TEST_F(Cli, SnliReportsProfile) {
  ASSERT_EQ(run({"phantom", "--dims", "32,32,4", "--out", path("x.vxr")}).code, 0);
  const auto r = run({"snli", "--in", path("x.vxr"), "--out", path("p.csv")});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("snli=", 0), 0u);
  EXPECT_EQ(lines(slurp(path("p.csv"))).size(), 6u);
}
