// Reaching environment for k-chain robots: state assembly, joint-velocity
// integration, flag evaluation, shaped per-task rewards with a coordination
// bonus, and the error/score metric.
#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "dualreach/kinematics.hpp"

namespace dualreach {

enum class SceneMode { kNoObstacles, kRandomObstacles, kStaticScene };

SceneMode parse_scene_mode(const std::string& text);
std::string to_string(SceneMode mode);

struct RewardParams {
  double alpha = 1.0;   // distance penalty weight
  double n1 = 10.0;     // collision penalty
  double n2 = 20.0;     // instability penalty
  double m1 = 1.0;      // goal-boundary bonus
  double m2 = 5.0;      // goal bonus
  double kappa = 100.0; // all goals reached simultaneously
};

struct EnvConfig {
  SceneMode mode = SceneMode::kNoObstacles;
  double dt = 0.05;
  RewardParams reward;
  double goal_radius = 0.02;
  double boundary_radius = 0.10;
  int max_steps = 150;
  double action_bound = 1.0;  // rad/s, per joint
  WorkspaceBounds goal_bounds;
  std::vector<Eigen::Vector3d> goal_offsets;  // one per chain
  int obstacle_count = 0;
  ObstacleRanges obstacle_ranges;
  std::vector<Obstacle> static_obstacles;
  double goal_clearance = 0.05;  // sampled obstacles keep this far from goals

  void validate(int num_chains) const;
};

// Defaults matched to planar_dual_arm(): an object of width 0.3 m in front of
// the torso.
EnvConfig planar_env_config(SceneMode mode = SceneMode::kNoObstacles);
EnvConfig spatial_env_config(SceneMode mode = SceneMode::kNoObstacles);
// Reads the [env] section (and [obstacle] sections for static scenes).
EnvConfig env_config_from(const Config& cfg, const RobotModel& model);
// [obstacle] sections: shape = sphere|box, center, radius or half_extents.
std::vector<Obstacle> obstacles_from(const Config& cfg);

struct FlagSet {
  bool collision = false;
  bool unstable = false;
  std::vector<bool> boundary;  // per task: inside the goal boundary
  std::vector<bool> goal;      // per task: inside the goal radius

  bool all_goals() const;
};

FlagSet evaluate_flags(std::span<const double> distances, bool collision, bool unstable,
                       double goal_radius, double boundary_radius);

// Per-task reward: -alpha*dist plus every applicable flag term; all goals
// reached overrides every task's reward with kappa.
Eigen::VectorXd compute_reward(std::span<const double> distances, const FlagSet& flags,
                               const RewardParams& params);

struct Score {
  std::vector<double> errors;
  double score = 0.0;
};

// error_i = |G_i - E_i|, score = -ln(sum of errors), with the sum floored at 1e-12.
Score compute_score(const std::vector<Eigen::Vector3d>& goals,
                    const std::vector<Eigen::Vector3d>& end_effectors);

struct StepResult {
  Eigen::VectorXd next_state;
  Eigen::VectorXd rewards;
  FlagSet flags;
  bool done = false;      // episode over: all goals, unstable, or step budget spent
  bool terminal = false;  // all goals or unstable; the step budget alone is not terminal
};

class Environment {
 public:
  Environment(RobotModel model, EnvConfig config);

  Eigen::VectorXd reset(Rng& rng);
  StepResult step(const Eigen::VectorXd& action);

  // Replaces the current scene and puts the robot at `q` (evaluation and
  // tests). Resets the step counter.
  void set_scene(const std::vector<Eigen::Vector3d>& goals, std::vector<Obstacle> obstacles,
                 const JointVector& q);

  int state_size() const;
  int action_size() const { return model_.num_joints(); }
  int num_tasks() const { return model_.num_chains(); }

  const RobotModel& model() const { return model_; }
  const EnvConfig& config() const { return config_; }
  const JointVector& joints() const { return q_; }
  const std::vector<Eigen::Vector3d>& goals() const { return goals_; }
  const std::vector<Obstacle>& obstacles() const { return obstacles_; }
  const std::vector<Eigen::Vector3d>& end_effectors() const { return pose_.end_effectors; }
  const FlagSet& flags() const { return flags_; }
  int steps() const { return steps_; }
  Eigen::VectorXd state() const;
  Score score() const { return compute_score(goals_, pose_.end_effectors); }

 private:
  void refresh();

  RobotModel model_;
  EnvConfig config_;
  JointVector q_;
  Pose pose_;
  std::vector<Eigen::Vector3d> goals_;
  std::vector<Obstacle> obstacles_;
  std::vector<double> distances_;
  FlagSet flags_;
  int steps_ = 0;
};

}  // namespace dualreach
