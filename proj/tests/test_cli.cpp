#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "crowdcast/io.hpp"
#include "crowdcast/metrics.hpp"

using namespace crowdcast;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(CROWDCAST_CLI) + " " + args + " 2>&1";
  Run r{-1, {}};
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("crowdcast_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Annotations and smoothed maps for a short moving-crowd clip.
  void make_clip(std::size_t frames) {
    ASSERT_EQ(cli("simulate --scenario moving-crowd --frames " + std::to_string(frames) +
                  " --seed 3 --out " + path("ann.csv")).code, 0);
    ASSERT_EQ(cli("rasterize --ann " + path("ann.csv") + " --sigma 3 --out " + path("data.cdmf")).code, 0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateIsDeterministic) {
  ASSERT_EQ(cli("simulate --scenario two-groups --frames 30 --seed 5 --out " + path("a.csv")).code, 0);
  ASSERT_EQ(cli("simulate --scenario two-groups --frames 30 --seed 5 --out " + path("b.csv")).code, 0);
  EXPECT_EQ(io::read_file(path("a.csv")), io::read_file(path("b.csv")));
  const auto ann = io::read_annotations(path("a.csv"));
  EXPECT_FALSE(ann.empty());
  EXPECT_EQ(frame_count(ann), 30u);
}

TEST_F(Cli, SimulateJsonScenario) {
  io::write_file(path("s.json"),
                 R"({"n_frames": 4, "jitter": 0, "groups": [{"velocity": [1, 0], "positions": [[10, 40]]}]})");
  ASSERT_EQ(cli("simulate --scenario " + path("s.json") + " --out " + path("a.csv")).code, 0);
  const auto ann = io::read_annotations(path("a.csv"));
  ASSERT_EQ(ann.size(), 4u);
  EXPECT_DOUBLE_EQ(ann[3].x, 13.0);
}

TEST_F(Cli, SimulateRejectsBadInput) {
  EXPECT_EQ(cli("simulate --scenario two-groups").code, 2);
  EXPECT_EQ(cli("simulate --scenario two-groups --frames 0 --out " + path("a.csv")).code, 2);
  EXPECT_EQ(cli("simulate --scenario no-such-preset --out " + path("a.csv")).code, 2);
}

TEST_F(Cli, RasterizeFrameCountAndErrors) {
  io::write_file(path("ann.csv"), "frame,id,x,y\n0,1,3.5,4.5\n6,1,10,10\n");
  ASSERT_EQ(cli("rasterize --ann " + path("ann.csv") + " --out " + path("d.cdmf")).code, 0);
  const auto seq = io::read_sequence(path("d.cdmf"));
  ASSERT_EQ(seq.length(), 7u);
  EXPECT_EQ(seq.frames[0].at(3, 4), 1.0f);
  EXPECT_EQ(seq.frames[6].at(10, 10), 1.0f);

  io::write_file(path("bad.csv"), "frame,id,x,y\n0,1,80,4\n");
  EXPECT_EQ(cli("rasterize --ann " + path("bad.csv") + " --out " + path("x.cdmf")).code, 2);
  EXPECT_EQ(cli("rasterize --ann " + path("missing.csv") + " --out " + path("x.cdmf")).code, 2);

  io::write_file(path("empty.csv"), "frame,id,x,y\n");
  ASSERT_EQ(cli("rasterize --ann " + path("empty.csv") + " --frames 3 --out " + path("e.cdmf")).code, 0);
  const auto empty = io::read_sequence(path("e.cdmf"));
  ASSERT_EQ(empty.length(), 3u);
  for (const auto& f : empty.frames)
    for (float v : f.values) EXPECT_EQ(v, 0.0f);
}

TEST_F(Cli, TrainRejectsZeroIterations) {
  make_clip(25);
  EXPECT_EQ(cli("train-ae --data " + path("data.cdmf") + " --iters 0 --out " + path("ae.ckpt")).code, 2);
  EXPECT_FALSE(fs::exists(path("ae.ckpt")));
}

TEST_F(Cli, PipelineRoundTrip) {
  make_clip(30);
  const std::string d = path("data.cdmf");
  const auto train = [&](const std::string& tag) {
    const auto ae = cli("train-ae --data " + d + " --iters 2 --batch 2 --seed 4 --loss-csv " +
                        path("loss" + tag + ".csv") + " --out " + path("ae" + tag + ".ckpt"));
    ASSERT_EQ(ae.code, 0) << ae.out;
    EXPECT_NE(ae.out.find("iter=1 loss="), std::string::npos);
    ASSERT_EQ(cli("train-forecaster --data " + d + " --ae " + path("ae" + tag + ".ckpt") +
                  " --iters 2 --batch 2 --seed 4 --out " + path("fc" + tag + ".ckpt")).code, 0);
  };
  train("a");
  train("b");
  EXPECT_EQ(io::read_file(path("aea.ckpt")), io::read_file(path("aeb.ckpt")));
  EXPECT_EQ(io::read_file(path("fca.ckpt")), io::read_file(path("fcb.ckpt")));
  EXPECT_EQ(io::read_file(path("lossa.csv")).rfind("iteration,loss\n1,", 0), 0u);

  const std::string models = " --ae " + path("aea.ckpt") + " --fc " + path("fca.ckpt");
  ASSERT_EQ(cli("forecast --data " + d + models + " --window-start 5 --out " + path("p.cdmf")).code, 0);
  const auto pred = io::read_sequence(path("p.cdmf"));
  ASSERT_EQ(pred.length(), 12u);
  EXPECT_EQ(pred.width(), 80u);
  EXPECT_EQ(cli("forecast --data " + d + models + " --window-start 11 --out " + path("q.cdmf")).code, 2);
  EXPECT_EQ(cli("forecast --data " + d + " --ae " + path("none.ckpt") + " --fc " + path("fca.ckpt") +
                " --window-start 0 --out " + path("q.cdmf")).code, 2);
  // Swapped checkpoints are rejected.
  EXPECT_EQ(cli("forecast --data " + d + " --ae " + path("fca.ckpt") + " --fc " + path("aea.ckpt") +
                " --window-start 0 --out " + path("q.cdmf")).code, 2);

  ASSERT_EQ(cli("slice --data " + d + " --start 13 --count 12 --out " + path("gt.cdmf")).code, 0);
  const auto ev = cli("evaluate --pred " + path("p.cdmf") + " --gt " + path("gt.cdmf") + " --out " + path("r.csv"));
  ASSERT_EQ(ev.code, 0);
  EXPECT_NE(ev.out.find("average d_kl="), std::string::npos);
}

TEST_F(Cli, PersistenceRepeatsFrameEight) {
  make_clip(30);
  ASSERT_EQ(cli("baseline --method persistence --ann " + path("ann.csv") + " --data " +
                path("data.cdmf") + " --window-start 4 --out " + path("p.cdmf")).code, 0);
  const auto data = io::read_sequence(path("data.cdmf"));
  const auto pred = io::read_sequence(path("p.cdmf"));
  ASSERT_EQ(pred.length(), 12u);
  for (const auto& f : pred.frames) EXPECT_EQ(f, data.frames[4 + 7]);
  // Rasterizing from annotations with the same sigma gives the same maps.
  ASSERT_EQ(cli("baseline --method persistence --ann " + path("ann.csv") + " --window-start 4 --out " +
                path("q.cdmf")).code, 0);
  EXPECT_EQ(io::read_sequence(path("q.cdmf")).frames, pred.frames);
  EXPECT_EQ(cli("baseline --method persistence --ann " + path("ann.csv") + " --window-start 11 --out " +
                path("x.cdmf")).code, 2);
}

TEST_F(Cli, ConstVelBaseline) {
  make_clip(30);
  ASSERT_EQ(cli("baseline --method constvel --ann " + path("ann.csv") + " --window-start 2 --out " +
                path("c.cdmf")).code, 0);
  EXPECT_EQ(io::read_sequence(path("c.cdmf")).length(), 12u);
  EXPECT_EQ(cli("baseline --method constvel --ann " + path("ann.csv") + " --window-start 20 --out " +
                path("c.cdmf")).code, 2);
  EXPECT_EQ(cli("baseline --method kalman --ann " + path("ann.csv") + " --window-start 0 --out " +
                path("c.cdmf")).code, 2);
}

TEST_F(Cli, EvaluateIdentityMismatchAndPrefactor) {
  make_clip(30);
  const std::string d = path("data.cdmf");
  ASSERT_EQ(cli("slice --data " + d + " --start 0 --count 12 --out " + path("a.cdmf")).code, 0);
  ASSERT_EQ(cli("slice --data " + d + " --start 10 --count 12 --out " + path("b.cdmf")).code, 0);
  ASSERT_EQ(cli("slice --data " + d + " --start 0 --count 11 --out " + path("c.cdmf")).code, 0);

  ASSERT_EQ(cli("evaluate --pred " + path("a.cdmf") + " --gt " + path("a.cdmf") + " --out " + path("self.csv")).code, 0);
  const std::string self = io::read_file(path("self.csv"));
  EXPECT_EQ(self.rfind("frame,d_kl,d_ikl,d_js\n", 0), 0u);
  const auto pos = self.find("\naverage,");
  ASSERT_NE(pos, std::string::npos);
  double kl = 1, ikl = 1, js = 1;
  ASSERT_EQ(std::sscanf(self.c_str() + pos, "\naverage,%lf,%lf,%lf", &kl, &ikl, &js), 3);
  EXPECT_LE(std::abs(kl) + std::abs(ikl) + std::abs(js), 1e-12);

  EXPECT_EQ(cli("evaluate --pred " + path("c.cdmf") + " --gt " + path("a.cdmf") + " --out " + path("x.csv")).code, 2);

  ASSERT_EQ(cli("evaluate --pred " + path("b.cdmf") + " --gt " + path("a.cdmf") + " --out " + path("plain.csv")).code, 0);
  ASSERT_EQ(cli("evaluate --pred " + path("b.cdmf") + " --gt " + path("a.cdmf") + " --prefactor --out " +
                path("scaled.csv")).code, 0);
  const auto read_avg = [&](const std::string& file) {
    const std::string text = io::read_file(file);
    double v[3] = {0, 0, 0};
    std::sscanf(text.c_str() + text.find("\naverage,"), "\naverage,%lf,%lf,%lf", &v[0], &v[1], &v[2]);
    return std::array<double, 3>{v[0], v[1], v[2]};
  };
  const auto plain = read_avg(path("plain.csv")), scaled = read_avg(path("scaled.csv"));
  for (int i = 0; i < 3; ++i) {
    EXPECT_GT(plain[i], 0.0);
    EXPECT_NEAR(scaled[i], plain[i] / 6400.0, 1e-8 * plain[i] / 6400.0);
  }
}

TEST_F(Cli, Selftest) {
  const auto ok = cli("selftest --instances 3");
  EXPECT_EQ(ok.code, 0) << ok.out;
  for (const char* op : {"conv2d", "deconv2d", "temporal_conv", "temporal_deconv", "per_location_linear",
                         "relu", "sigmoid", "bce_loss", "mse_loss"})
    EXPECT_NE(ok.out.find(std::string("PASS grad/f32/") + op + ":"), std::string::npos) << op;
  const auto bad = cli("selftest --instances 3 --corrupt conv2d");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL grad/f32/conv2d"), std::string::npos);
  EXPECT_EQ(cli("selftest --corrupt nothing").code, 2);
}
