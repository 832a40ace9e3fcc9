#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "sbd/binary_io.hpp"
#include "sbd/svol.hpp"
#include "tiny_config.hpp"

namespace sbd {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = testing::scratch_dir("cli");
    config_ = (dir_ / "tiny.conf").string();
    io::write_text(config_, format_config(testing::tiny_config()));
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string gen() {
    const auto r = run({"gen-data", "--config", config_, "--out", path("data")});
    EXPECT_EQ(r.code, 0) << r.err;
    return path("data/manifest.tsv");
  }

  fs::path dir_;
  std::string config_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"gen-data"}).code, 1);
  EXPECT_EQ(run({"gen-data", "--out", path("x"), "--set", "no.such.key=1"}).code, 1);
  EXPECT_EQ(run({"gen-data", "--out", path("x"), "--set", "data.height=44"}).code, 1);
  EXPECT_EQ(run({"gen-data", "--out", path("x"), "--config", path("missing.conf")}).code, 1);
  const auto manifest = gen();
  const auto r = run({"train-seg", "--config", config_, "--manifest", manifest, "--mode", "bogus", "--out", path("s")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
  EXPECT_EQ(run({"train-seg", "--config", config_, "--manifest", manifest, "--out", path("s")}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train-rpn"), std::string::npos);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run({"train-rpn", "--config", config_, "--manifest", path("none.tsv"), "--out", path("r")}).code, 2);
  io::write_text(path("bad.svol"), "SVOX");
  io::write_text(path("bad.tsv"), "train\tbad.svol\tbad.svol\n");
  const auto r = run({"train-rpn", "--config", config_, "--manifest", path("bad.tsv"), "--out", path("r")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("offset"), std::string::npos);
}

TEST_F(CliTest, DivergenceExitsThree) {
  const auto manifest = gen();
  const auto r = run({"train-rpn", "--config", config_, "--manifest", manifest, "--set", "rpn.lr=1e30", "--set",
                      "rpn.momentum=0", "--out", path("r")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(CliTest, FullFlow) {
  const auto manifest = gen();
  auto r = run({"train-rpn", "--config", config_, "--manifest", manifest, "--out", path("rpn")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string rpn = path("rpn/rpn_final.sgck");
  EXPECT_EQ(r.out, rpn + "\n");

  r = run({"train-seg", "--config", config_, "--manifest", manifest, "--mode", "attention", "--rpn-ckpt", rpn, "--out",
           path("seg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string seg = path("seg/seg_attention_best.sgck");
  EXPECT_EQ(r.out, seg + "\n");

  r = run({"train-seg", "--config", config_, "--manifest", manifest, "--mode", "plain", "--out", path("seg")});
  ASSERT_EQ(r.code, 0) << r.err;

  r = run({"infer", "--config", config_, "--seg-ckpt", seg, "--rpn-ckpt", rpn, "--volume",
           path("data/test_00_image.svol"), "--labels", path("data/test_00_labels.svol"), "--out", path("pred/t0")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("iou\t", 0), 0u);
  EXPECT_EQ(read_svol(path("pred/t0_pred.svol")).dims, (Dims{16, 16, 16}));
  EXPECT_TRUE(fs::exists(path("pred/t0_attention.svol")));

  r = run({"infer", "--config", config_, "--seg-ckpt", seg, "--volume", path("data/test_00_image.svol"), "--out",
           path("pred/t1")});
  EXPECT_EQ(r.code, 1);

  r = run({"eval", "--config", config_, "--manifest", manifest, "--seg-ckpt", path("seg/seg_plain_best.sgck"),
           "--seg-ckpt", seg, "--rpn-ckpt", rpn, "--out", path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("method", 0), 0u);
  EXPECT_NE(r.out.find("plain"), std::string::npos);
  EXPECT_NE(r.out.find("attention"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("eval/report.tsv")));
}

TEST_F(CliTest, InferIsDeterministic) {
  const auto manifest = gen();
  ASSERT_EQ(run({"train-seg", "--config", config_, "--manifest", manifest, "--mode", "mask3d", "--out", path("seg")}).code, 0);
  for (const char* out : {"a", "b"}) {
    ASSERT_EQ(run({"infer", "--config", config_, "--seg-ckpt", path("seg/seg_mask3d_final.sgck"), "--volume",
                   path("data/test_01_image.svol"), "--labels", path("data/test_01_labels.svol"), "--out", path(out)})
                  .code,
              0);
  }
  EXPECT_EQ(io::read_file(path("a_pred.svol")), io::read_file(path("b_pred.svol")));
}

}  // namespace
}  // namespace sbd
