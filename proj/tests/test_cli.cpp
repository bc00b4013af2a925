#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dualreach/cli.hpp"
#include "dualreach/trajectory_io.hpp"

using namespace dualreach;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dualreach_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.ini";
  std::ofstream(p) << "[robot]\npreset = planar\n[env]\nmax_steps = 12\n"
                      "[train]\nactor_hidden = 8 8\ncritic_hidden = 8 8\nbatch_size = 8\n"
                      "max_episodes = 3\nmax_steps = 12\n";
  return p;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dualreach");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(TrajectoryCsv, RoundTripIsExact) {
  const auto dir = scratch("csv");
  JointTrajectory t;
  t.t = {0.0, 0.1, 0.30000000000000004};
  t.q.resize(3, 2);
  t.q << 1.0 / 3.0, -2e-17, 1e300, 0.5, -0.125, 3.141592653589793;
  write_trajectory_csv(dir / "a.csv", t);
  const auto back = read_trajectory_csv(dir / "a.csv");
  EXPECT_EQ(back.t, t.t);
  EXPECT_EQ(back.q, t.q);
  EXPECT_EQ(slurp(dir / "a.csv").substr(0, 9), "t,q0,q1\n0");
}

TEST(TrajectoryCsv, RejectsMalformedFiles) {
  const auto dir = scratch("csv_bad");
  std::ofstream(dir / "header.csv") << "time,q0\n0,1\n1,2\n";
  std::ofstream(dir / "cols.csv") << "t,q0\n0,1\n1,2,3\n";
  std::ofstream(dir / "order.csv") << "t,q0\n1,1\n0,2\n";
  std::ofstream(dir / "short.csv") << "t,q0\n0,1\n";
  std::ofstream(dir / "num.csv") << "t,q0\n0,1\n1,abc\n";
  for (const char* f : {"header.csv", "cols.csv", "order.csv", "short.csv", "num.csv"})
    EXPECT_THROW(read_trajectory_csv(dir / f), FormatError) << f;
  EXPECT_ANY_THROW(read_trajectory_csv(dir / "missing.csv"));
}

TEST(SceneFile, RoundTrip) {
  const auto dir = scratch("scene");
  Scene s;
  s.goals = {{0.1, 0.2, 0.3}, {-0.4, 0.0, 0.5}};
  s.obstacles = {make_sphere({0.3, 0.0, 0.4}, 0.05)};
  write_scene(dir / "scene.ini", s);
  const auto back = read_scene(dir / "scene.ini");
  ASSERT_EQ(back.goals.size(), 2u);
  EXPECT_EQ(back.goals[1], s.goals[1]);
  ASSERT_EQ(back.obstacles.size(), 1u);
  EXPECT_EQ(std::get<Sphere>(back.obstacles[0]).radius, 0.05);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({"--help"}), 0);
  EXPECT_EQ(run_cli({}), 1);
  EXPECT_EQ(run_cli({"bogus"}), 1);
  EXPECT_EQ(run_cli({"train", "--seed", "notanumber"}), 1);
  const auto dir = scratch("exit");
  EXPECT_EQ(run_cli({"smooth", (dir / "missing.csv").string(), "--out", dir.string()}), 1);
  std::ofstream(dir / "bad.csv") << "nonsense\n";
  EXPECT_EQ(run_cli({"smooth", (dir / "bad.csv").string(), "--out", dir.string()}), 2);
}

TEST(Cli, TrainIsDeterministicAndWritesOutputs) {
  const auto dir = scratch("train");
  const auto cfg = tiny_config(dir);
  cli::cmd_train(cfg, 7, dir / "a", std::nullopt);
  cli::cmd_train(cfg, 7, dir / "b", std::nullopt);
  cli::cmd_train(cfg, 8, dir / "c", std::nullopt);
  for (const char* f : {"checkpoint.bin", "scores.csv", "scores.svg", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  EXPECT_EQ(slurp(dir / "a" / "scores.csv"), slurp(dir / "b" / "scores.csv"));
  EXPECT_NE(slurp(dir / "a" / "scores.csv"), slurp(dir / "c" / "scores.csv"));
  EXPECT_EQ(slurp(dir / "a" / "checkpoint.bin"), slurp(dir / "b" / "checkpoint.bin"));

  std::istringstream csv(slurp(dir / "a" / "scores.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "episode,error1,error2,score");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(Cli, RolloutAndEval) {
  const auto dir = scratch("rollout");
  const auto cfg = tiny_config(dir);
  cli::cmd_train(cfg, 3, dir / "run", 2);
  const auto ckpt = dir / "run" / "checkpoint.bin";
  cli::cmd_rollout(ckpt, cfg, 5, dir / "roll");
  for (const char* f : {"trajectory.csv", "end_effectors.csv", "flags.json", "scene.ini"})
    EXPECT_TRUE(fs::exists(dir / "roll" / f)) << f;
  const auto traj = read_trajectory_csv(dir / "roll" / "trajectory.csv");
  EXPECT_EQ(traj.joints(), 5);
  const auto flags = nlohmann::json::parse(slurp(dir / "roll" / "flags.json"));
  EXPECT_EQ(flags["steps"].get<int>() + 1, traj.knots());

  const auto none = cli::cmd_eval(ckpt, cfg, 0, 1, dir / "eval0");
  EXPECT_EQ(none["episodes"], 0);
  EXPECT_TRUE(none["score_mean"].is_null());
  const auto some = cli::cmd_eval(ckpt, cfg, 3, 1, dir / "eval3");
  EXPECT_EQ(some["episodes"], 3);
  EXPECT_GE(some["success_rate"].get<double>(), 0.0);
  EXPECT_LE(some["success_rate"].get<double>(), 1.0);
  EXPECT_EQ(some, cli::cmd_eval(ckpt, cfg, 3, 1, dir / "eval3b"));

  // A checkpoint from a different robot must be refused.
  const fs::path spatial = dir / "spatial.ini";
  std::ofstream(spatial) << "[robot]\npreset = spatial\n";
  EXPECT_ANY_THROW(cli::cmd_rollout(ckpt, spatial, 5, dir / "bad"));
}

TEST(Cli, SmoothWritesReportAndPlots) {
  const auto dir = scratch("smooth");
  const auto setup = cli::load_setup({});
  JointTrajectory traj;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.02);
  const int knots = 20;
  traj.q.resize(knots, setup.model.num_joints());
  for (int i = 0; i < knots; ++i) {
    traj.t.push_back(i);
    for (int j = 0; j < setup.model.num_joints(); ++j) traj.q(i, j) = setup.model.home()[j] + 0.01 * i + n(rng);
  }
  write_trajectory_csv(dir / "traj.csv", traj);
  cli::cmd_smooth(dir / "traj.csv", {}, {}, dir / "out", 1e-6);
  for (const char* f : {"smoothed.csv", "smoothed_dense.csv", "smoothing_report.csv", "smoothing_q0.svg",
                        "smoothing_ee.svg"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  const auto smoothed = read_trajectory_csv(dir / "out" / "smoothed.csv");
  EXPECT_EQ(smoothed.knots(), knots);
  const auto dense = read_trajectory_csv(dir / "out" / "smoothed_dense.csv");
  EXPECT_EQ(dense.knots(), (knots - 1) * 10 + 1);
  std::istringstream report(slurp(dir / "out" / "smoothing_report.csv"));
  std::string line;
  std::getline(report, line);
  EXPECT_EQ(line, "joint,p_opt,evaluations,roughness_before,roughness_after");
  int rows = 0;
  while (std::getline(report, line)) ++rows;
  EXPECT_EQ(rows, setup.model.num_joints());
}
