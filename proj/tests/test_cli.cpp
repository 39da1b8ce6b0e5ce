// Runs the acdiff executable end to end.

#include "acdiff/checkpoint.hpp"
#include "acdiff/data.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

using namespace acdiff;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(ACDIFF_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

// Small but real model, shared by the tests below.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = testutil::fresh_dir("cli_" + std::to_string(::getpid()));
    write_text(dir_ / "run.cfg",
               "dataset = shapes_16x16\nsamples_per_class = 10\nt_min = 10\nt_max = 60\n"
               "d_emb = 8\nhidden = 8\ndenoiser_hidden = 16\ntime_dim = 8\n"
               "batch_size = 8\nsteps = 20\nlr = 0.01\nseed = 7\n");
    ASSERT_EQ(run("train --config " + (dir_ / "run.cfg").string() + " --out " + (dir_ / "m.ckpt").string()), 0);
    write_pgm(dir_ / "blank.pgm", ConditionImage(16, 16, 0.0));
    Rng rng(5);
    std::vector<double> px(256);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i % 32) / 31.0;
    write_pgm(dir_ / "busy.pgm", ConditionImage(16, 16, px));
  }
  static fs::path dir_;
  static std::string p(const std::string& name) { return (dir_ / name).string(); }
};
fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, TrainIsByteReproducible) {
  ASSERT_EQ(run("train --config " + p("run.cfg") + " --out " + p("m2.ckpt")), 0);
  EXPECT_EQ(slurp(dir_ / "m.ckpt"), slurp(dir_ / "m2.ckpt"));
  EXPECT_EQ(slurp(dir_ / "m.ckpt.loss.csv"), slurp(dir_ / "m2.ckpt.loss.csv"));
  EXPECT_EQ(lines(slurp(dir_ / "m.ckpt.loss.csv")).size(), 21u);
}

TEST_F(Cli, ZeroStepsStoresInitialParameters) {
  write_text(dir_ / "zero.cfg", slurp(dir_ / "run.cfg") + "steps = 0\n");
  // a repeated key overrides the earlier value
  ASSERT_EQ(run("train --config " + p("zero.cfg") + " --out " + p("zero.ckpt")), 0);
  const Checkpoint ck = load_checkpoint(dir_ / "zero.ckpt");
  Rng rng = Rng::stream(7, 0);
  const Model init = Model::init(ck.config.model_config(), rng);
  const auto a = init.named_parameters(), b = ck.model.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Matrix rounded = a[i].second->value().cast<float>().cast<double>();
    EXPECT_EQ(rounded, b[i].second->value()) << a[i].first;
  }
}

TEST_F(Cli, GenerateIsByteReproducible) {
  const std::string args = "generate --ckpt " + p("m.ckpt") + " --class 2 --condition " + p("busy.pgm") +
                           " --count 3 --seed 11 --out ";
  ASSERT_EQ(run(args + p("g1")), 0);
  ASSERT_EQ(run(args + p("g2")), 0);
  for (const char* f : {"manifest.csv", "sample_00000.pgm", "sample_00002.pgm"}) {
    EXPECT_EQ(slurp(dir_ / "g1" / f), slurp(dir_ / "g2" / f)) << f;
  }
  const auto rows = lines(slurp(dir_ / "g1" / "manifest.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], "index,class,t_cond,lambda,r_s,u,alpha_bar_final,output");
  EXPECT_EQ(fields(rows[1])[1], "2");
}

TEST_F(Cli, BusyConditionGetsMoreStepsThanBlank) {
  ASSERT_EQ(run("generate --ckpt " + p("m.ckpt") + " --class 0 --condition " + p("blank.pgm") +
                " --count 1 --seed 1 --out " + p("blank")),
            0);
  ASSERT_EQ(run("generate --ckpt " + p("m.ckpt") + " --class 0 --condition " + p("busy.pgm") +
                " --count 1 --seed 1 --out " + p("busy")),
            0);
  const int blank = std::stoi(fields(lines(slurp(dir_ / "blank" / "manifest.csv"))[1])[2]);
  const int busy = std::stoi(fields(lines(slurp(dir_ / "busy" / "manifest.csv"))[1])[2]);
  EXPECT_GT(busy, blank);
}

TEST_F(Cli, CountZeroWritesHeaderOnly) {
  ASSERT_EQ(run("generate --ckpt " + p("m.ckpt") + " --class 0 --condition " + p("busy.pgm") +
                " --count 0 --seed 1 --out " + p("empty")),
            0);
  EXPECT_EQ(lines(slurp(dir_ / "empty" / "manifest.csv")).size(), 1u);
}

TEST_F(Cli, EvalIsByteReproducibleAndFixedUsesFullLength) {
  const std::string args = "eval --ckpt " + p("m.ckpt") + " --mode fixed_T_fixed_beta --n 5 --seed 3 --out ";
  fs::create_directories(dir_ / "e1");
  fs::create_directories(dir_ / "e2");
  ASSERT_EQ(run(args + p("e1")), 0);
  ASSERT_EQ(run(args + p("e2")), 0);
  EXPECT_EQ(slurp(dir_ / "e1" / "report.txt"), slurp(dir_ / "e2" / "report.txt"));
  EXPECT_EQ(slurp(dir_ / "e1" / "per_class.csv"), slurp(dir_ / "e2" / "per_class.csv"));
  EXPECT_NE(slurp(dir_ / "e1" / "report.txt").find("avg_steps=60\n"), std::string::npos);
}

TEST_F(Cli, ScheduleDump) {
  ASSERT_EQ(run("schedule --config " + p("run.cfg") + " --rs 1 --lambda 1 --steps 30 --out " + p("s1.csv")), 0);
  auto rows = lines(slurp(dir_ / "s1.csv"));
  ASSERT_EQ(rows.size(), 31u);
  EXPECT_EQ(rows[0], "t,beta,beta_tilde,beta_prime,alpha_bar_prime");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(fields(rows[i])[1], fields(rows[i])[3]) << i;

  ASSERT_EQ(run("schedule --config " + p("run.cfg") + " --rs 0.5 --lambda 1 --steps 30 --out " + p("s2.csv")), 0);
  const auto half = lines(slurp(dir_ / "s2.csv"));
  EXPECT_EQ(std::stod(fields(half[30])[1]), 2 * std::stod(fields(rows[30])[1]));

  ASSERT_EQ(run("schedule --config " + p("run.cfg") + " --rs 1 --lambda 0.3 --steps 1 --out " + p("s3.csv")), 0);
  EXPECT_EQ(lines(slurp(dir_ / "s3.csv")).size(), 2u);
}

TEST_F(Cli, DatasetExport) {
  ASSERT_EQ(run("dataset --config " + p("run.cfg") + " --out " + p("ds")), 0);
  EXPECT_EQ(read_dataset_manifest(dir_ / "ds" / "manifest.txt").size(), 50u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("train --config " + p("nope.cfg") + " --out " + p("x.ckpt")), 1);
  write_text(dir_ / "bad.cfg", "wibble = 3\n");
  EXPECT_EQ(run("train --config " + p("bad.cfg") + " --out " + p("x.ckpt")), 1);
  EXPECT_EQ(run("generate --ckpt " + p("m.ckpt") + " --class 9 --condition " + p("busy.pgm") +
                " --count 1 --seed 1 --out " + p("bad")),
            1);
  std::string bytes = slurp(dir_ / "m.ckpt");
  bytes[bytes.size() / 2] ^= 0x10;
  write_text(dir_ / "corrupt.ckpt", bytes);
  EXPECT_EQ(run("eval --ckpt " + p("corrupt.ckpt") + " --mode adaptive --n 2 --seed 1"), 1);

  write_text(dir_ / "blowup.cfg", slurp(dir_ / "run.cfg") + "lr = 1e300\nsteps = 3\n");
  EXPECT_EQ(run("train --config " + p("blowup.cfg") + " --out " + p("blowup.ckpt")), 2);
}
