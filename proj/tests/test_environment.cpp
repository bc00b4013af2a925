#include <gtest/gtest.h>

#include <cmath>

#include "dualreach/config.hpp"
#include "dualreach/environment.hpp"

using namespace dualreach;

namespace {

FlagSet flags(bool cols, bool instb, std::vector<bool> gb, std::vector<bool> goal) {
  FlagSet f;
  f.collision = cols;
  f.unstable = instb;
  f.boundary = std::move(gb);
  f.goal = std::move(goal);
  return f;
}

}  // namespace

TEST(Reward, DistanceOnly) {
  const std::vector<double> d = {0.5, 0.5};
  const auto r = compute_reward(d, flags(false, false, {false, false}, {false, false}), {});
  EXPECT_EQ(r[0], -0.5);
  EXPECT_EQ(r[1], -0.5);
}

TEST(Reward, BothGoalsOverride) {
  const std::vector<double> d = {0.01, 0.015};
  RewardParams p;
  const auto r = compute_reward(d, flags(true, true, {true, true}, {true, true}), p);
  EXPECT_EQ(r[0], p.kappa);
  EXPECT_EQ(r[1], p.kappa);
}

TEST(Reward, CollisionPlusBoundary) {
  const std::vector<double> d = {0.1, 0.4};
  const auto r = compute_reward(d, flags(true, false, {true, false}, {false, false}), {});
  EXPECT_DOUBLE_EQ(r[0], -0.1 - 10 + 1);
  EXPECT_DOUBLE_EQ(r[1], -0.4 - 10);
}

TEST(Reward, MismatchThrows) {
  const std::vector<double> d = {0.1};
  EXPECT_THROW(compute_reward(d, flags(false, false, {false, false}, {false, false}), {}),
               std::invalid_argument);
}

TEST(Flags, GoalImpliesBoundary) {
  const std::vector<double> d = {0.0, 0.02, 0.05, 0.1, 0.3};
  const auto f = evaluate_flags(d, false, false, 0.02, 0.1);
  EXPECT_EQ(f.goal, (std::vector<bool>{true, true, false, false, false}));
  EXPECT_EQ(f.boundary, (std::vector<bool>{true, true, true, true, false}));
}

TEST(Score, Examples) {
  const std::vector<Eigen::Vector3d> g = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_NEAR(compute_score(g, {{0.5, 0, 0}, {1, 0.5, 0}}).score, 0.0, 1e-15);
  EXPECT_NEAR(compute_score(g, {{0.05, 0, 0}, {1, 0, 0.05}}).score, 2.302585092994046, 1e-12);
  EXPECT_NEAR(compute_score(g, g).score, -std::log(1e-12), 1e-9);
  double last = 1e9;
  for (double e = 0.01; e < 1.0; e += 0.01) {
    const double s = compute_score(g, {{e, 0, 0}, {1, 0, 0.05}}).score;
    EXPECT_LT(s, last);
    last = s;
  }
}

TEST(Environment, StateLayout) {
  Environment plain(planar_dual_arm(), planar_env_config(SceneMode::kNoObstacles));
  EXPECT_EQ(plain.state_size(), 5 + 6 + 6);
  Rng rng(1);
  EXPECT_EQ(plain.reset(rng).size(), 17);

  EnvConfig c = spatial_env_config(SceneMode::kRandomObstacles);
  Environment spatial(spatial_dual_arm(), c);
  EXPECT_EQ(spatial.state_size(), 9 + 12 + 3 * 4);
  const auto s = spatial.reset(rng);
  EXPECT_EQ(s.size(), spatial.state_size());
  EXPECT_EQ(spatial.obstacles().size(), 3u);
}

TEST(Environment, ResetIsDeterministic) {
  Environment a(planar_dual_arm(), planar_env_config(SceneMode::kRandomObstacles));
  Environment b(planar_dual_arm(), planar_env_config(SceneMode::kRandomObstacles));
  Rng ra(42), rb(42);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.reset(ra), b.reset(rb));
  EXPECT_EQ(a.joints(), planar_dual_arm().home());
  EXPECT_FALSE(a.flags().collision);
}

TEST(Environment, ZeroActionKeepsPosture) {
  Environment env(planar_dual_arm(), planar_env_config());
  Rng rng(3);
  env.reset(rng);
  const auto q = env.joints();
  const auto before = env.score();
  const auto r = env.step(Eigen::VectorXd::Zero(5));
  EXPECT_EQ(env.joints(), q);
  EXPECT_EQ(env.score().errors, before.errors);
  EXPECT_FALSE(r.done);
  EXPECT_EQ(env.steps(), 1);
}

TEST(Environment, StepStaysWithinLimitsAndIntegrates) {
  const auto m = planar_dual_arm();
  Environment env(m, planar_env_config());
  Rng rng(3);
  env.reset(rng);
  Eigen::VectorXd a(5);
  a << 0.5, -0.5, 0.25, 0, 1;
  const auto q0 = env.joints();
  env.step(a);
  EXPECT_LT((env.joints() - (q0 + 0.05 * a)).norm(), 1e-15);
  for (int i = 0; i < 200 && env.steps() < 150; ++i) {
    const auto r = env.step(Eigen::VectorXd::Constant(5, 5.0));
    for (int j = 0; j < 5; ++j) {
      EXPECT_LE(env.joints()[j], m.upper_limits()[j]);
      EXPECT_GE(env.joints()[j], m.lower_limits()[j]);
    }
    if (r.done) break;
  }
  EXPECT_THROW(env.step(Eigen::VectorXd::Zero(4)), std::invalid_argument);
}

TEST(Environment, BothGoalsTerminateWithKappa) {
  const auto m = planar_dual_arm();
  Environment env(m, planar_env_config());
  JointVector q = m.home();
  q[1] -= 0.1;
  q[3] -= 0.1;
  // Goals placed where the hands will be after one step of the known action.
  Eigen::VectorXd a = Eigen::VectorXd::Zero(5);
  a[1] = 1.0;
  a[3] = 1.0;
  JointVector next = q + 0.05 * a;
  env.set_scene(end_effectors(m, next), {}, q);
  const auto r = env.step(a);
  EXPECT_TRUE(r.flags.all_goals());
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(r.terminal);
  EXPECT_EQ(r.rewards[0], env.config().reward.kappa);
  EXPECT_EQ(r.rewards[1], env.config().reward.kappa);
}

TEST(Environment, CollisionAddsPenalty) {
  const auto m = planar_dual_arm();
  EnvConfig c = planar_env_config(SceneMode::kStaticScene);
  c.static_obstacles = {make_sphere(Eigen::Vector3d(0.12, 0, 0.3), 0.02)};
  Environment env(m, c);
  const std::vector<Eigen::Vector3d> goals = {{-0.3, 0, 0.5}, {0.3, 0, 0.5}};
  env.set_scene(goals, c.static_obstacles, m.home());
  EXPECT_FALSE(env.flags().collision);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(5);
  a[0] = -1.0;  // lean the torso toward +x, into the sphere
  StepResult r;
  for (int i = 0; i < 12 && !r.flags.collision; ++i) r = env.step(a);
  ASSERT_TRUE(r.flags.collision);
  const auto d = env.score().errors;
  for (int i = 0; i < 2; ++i) {
    double expect = -d[i] - c.reward.n1;
    if (r.flags.unstable) expect -= c.reward.n2;
    if (r.flags.boundary[i]) expect += c.reward.m1;
    if (r.flags.goal[i]) expect += c.reward.m2;
    EXPECT_DOUBLE_EQ(r.rewards[i], expect);
  }
}

TEST(Environment, EpisodeBudget) {
  EnvConfig c = planar_env_config();
  c.max_steps = 7;
  Environment env(planar_dual_arm(), c);
  Rng rng(1);
  env.reset(rng);
  StepResult r;
  int n = 0;
  do {
    r = env.step(Eigen::VectorXd::Zero(5));
    ++n;
  } while (!r.done);
  EXPECT_EQ(n, 7);
  EXPECT_FALSE(r.terminal);
}

TEST(Environment, ConfigOverrides) {
  const auto cfg = Config::parse(R"(
[robot]
preset = planar
[env]
mode = static-scene
kappa = 50
max_steps = 20
[obstacle]
shape = box
center = 0.4 0 0.3
half_extents = 0.05 0.05 0.05
)");
  const auto m = robot_from_config(cfg);
  const auto c = env_config_from(cfg, m);
  EXPECT_EQ(c.mode, SceneMode::kStaticScene);
  EXPECT_EQ(c.reward.kappa, 50.0);
  EXPECT_EQ(c.max_steps, 20);
  ASSERT_EQ(c.static_obstacles.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<Box>(c.static_obstacles[0]));
  EXPECT_THROW(env_config_from(Config::parse("[env]\ngoal_radius = 0.5\n"), m), ConfigError);
  EXPECT_THROW(parse_scene_mode("bogus"), ConfigError);
}
