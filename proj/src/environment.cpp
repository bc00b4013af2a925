#include "dualreach/environment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dualreach/config.hpp"

namespace dualreach {

SceneMode parse_scene_mode(const std::string& text) {
  if (text == "no-obstacles") return SceneMode::kNoObstacles;
  if (text == "random-obstacles") return SceneMode::kRandomObstacles;
  if (text == "static-scene") return SceneMode::kStaticScene;
  throw ConfigError("unknown env mode '" + text +
                    "' (expected no-obstacles, random-obstacles or static-scene)");
}

std::string to_string(SceneMode mode) {
  switch (mode) {
    case SceneMode::kNoObstacles: return "no-obstacles";
    case SceneMode::kRandomObstacles: return "random-obstacles";
    case SceneMode::kStaticScene: return "static-scene";
  }
  return "?";
}

void EnvConfig::validate(int num_chains) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("EnvConfig: ") + what);
  };
  require(dt > 0.0, "dt must be positive");
  require(goal_radius > 0.0 && goal_radius < boundary_radius,
          "need 0 < goal_radius < boundary_radius");
  require(reward.n1 > 0 && reward.n2 > 0 && reward.m1 > 0 && reward.m2 > 0 && reward.kappa > 0,
          "reward constants must be positive");
  require(reward.alpha >= 0.0, "alpha must be nonnegative");
  require(max_steps > 0, "max_steps must be positive");
  require(action_bound > 0.0, "action_bound must be positive");
  require(static_cast<int>(goal_offsets.size()) == num_chains,
          "need one goal offset per chain");
  require((goal_bounds.hi.array() >= goal_bounds.lo.array()).all(), "goal bounds: hi < lo");
  require(obstacle_count >= 0, "obstacle_count must be >= 0");
}

EnvConfig planar_env_config(SceneMode mode) {
  EnvConfig c;
  c.mode = mode;
  c.goal_bounds = {{-0.10, 0.0, 0.0}, {0.10, 0.0, 0.30}};
  c.goal_offsets = {{-0.15, 0.0, 0.0}, {0.15, 0.0, 0.0}};
  if (mode == SceneMode::kRandomObstacles) {
    c.obstacle_count = 1;
    c.obstacle_ranges.centers = {{-0.35, 0.0, -0.05}, {0.35, 0.0, 0.45}};
    c.obstacle_ranges.min_radius = 0.03;
    c.obstacle_ranges.max_radius = 0.06;
    c.obstacle_ranges.clearance = 0.02;
  }
  return c;
}

EnvConfig spatial_env_config(SceneMode mode) {
  EnvConfig c;
  c.mode = mode;
  c.goal_bounds = {{0.15, -0.05, 0.05}, {0.30, 0.05, 0.30}};
  c.goal_offsets = {{0.0, 0.12, 0.0}, {0.0, -0.12, 0.0}};
  if (mode == SceneMode::kRandomObstacles) {
    c.obstacle_count = 3;
    c.obstacle_ranges.centers = {{0.1, -0.4, 0.0}, {0.5, 0.4, 0.6}};
    c.obstacle_ranges.clearance = 0.02;
  }
  return c;
}

namespace {

Eigen::Vector3d vec3(const ConfigSection& s, std::string_view key, const Eigen::Vector3d& fallback) {
  if (!s.has(key)) return fallback;
  const auto v = s.get_doubles(key);
  if (v.size() != 3) throw ConfigError("[" + s.name() + "] " + std::string(key) + ": expected 3 numbers");
  return {v[0], v[1], v[2]};
}

}  // namespace

std::vector<Obstacle> obstacles_from(const Config& cfg) {
  std::vector<Obstacle> out;
  for (const auto* s : cfg.sections("obstacle")) {
    const std::string kind = s->get_string("shape", "sphere");
    const Eigen::Vector3d center = vec3(*s, "center", Eigen::Vector3d::Zero());
    try {
      if (kind == "sphere") {
        out.push_back(make_sphere(center, s->get_double("radius")));
      } else if (kind == "box") {
        out.push_back(make_box(center, vec3(*s, "half_extents", Eigen::Vector3d::Zero())));
      } else {
        throw ConfigError("[obstacle] shape: expected sphere or box");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("[obstacle] (line ") + std::to_string(s->line()) + "): " + e.what());
    }
  }
  return out;
}

EnvConfig env_config_from(const Config& cfg, const RobotModel& model) {
  const auto& env = cfg.section_or_empty("env");
  const SceneMode mode = parse_scene_mode(env.get_string("mode", "no-obstacles"));
  const std::string preset = cfg.section_or_empty("robot").get_string("preset", "");
  EnvConfig c = preset == "spatial" ? spatial_env_config(mode) : planar_env_config(mode);

  c.dt = env.get_double("dt", c.dt);
  c.reward.alpha = env.get_double("alpha", c.reward.alpha);
  c.reward.n1 = env.get_double("n1", c.reward.n1);
  c.reward.n2 = env.get_double("n2", c.reward.n2);
  c.reward.m1 = env.get_double("m1", c.reward.m1);
  c.reward.m2 = env.get_double("m2", c.reward.m2);
  c.reward.kappa = env.get_double("kappa", c.reward.kappa);
  c.goal_radius = env.get_double("goal_radius", c.goal_radius);
  c.boundary_radius = env.get_double("boundary_radius", c.boundary_radius);
  c.max_steps = static_cast<int>(env.get_int("max_steps", c.max_steps));
  c.action_bound = env.get_double("action_bound", c.action_bound);
  c.goal_bounds.lo = vec3(env, "goal_lo", c.goal_bounds.lo);
  c.goal_bounds.hi = vec3(env, "goal_hi", c.goal_bounds.hi);
  c.goal_clearance = env.get_double("goal_clearance", c.goal_clearance);
  if (env.has("goal_offsets")) {
    const auto v = env.get_doubles("goal_offsets");
    if (v.size() % 3 != 0) throw ConfigError("[env] goal_offsets: expected triples");
    c.goal_offsets.clear();
    for (std::size_t i = 0; i < v.size(); i += 3) c.goal_offsets.emplace_back(v[i], v[i + 1], v[i + 2]);
  }

  c.obstacle_count = static_cast<int>(env.get_int("obstacle_count", c.obstacle_count));
  const std::string shape = env.get_string("obstacle_shape", "sphere");
  if (shape == "sphere") {
    c.obstacle_ranges.shape = ObstacleShape::kSphere;
  } else if (shape == "box") {
    c.obstacle_ranges.shape = ObstacleShape::kBox;
  } else {
    throw ConfigError("[env] obstacle_shape: expected sphere or box");
  }
  c.obstacle_ranges.centers.lo = vec3(env, "obstacle_lo", c.obstacle_ranges.centers.lo);
  c.obstacle_ranges.centers.hi = vec3(env, "obstacle_hi", c.obstacle_ranges.centers.hi);
  c.obstacle_ranges.min_radius = env.get_double("obstacle_min_radius", c.obstacle_ranges.min_radius);
  c.obstacle_ranges.max_radius = env.get_double("obstacle_max_radius", c.obstacle_ranges.max_radius);
  c.obstacle_ranges.min_half = vec3(env, "obstacle_min_half", c.obstacle_ranges.min_half);
  c.obstacle_ranges.max_half = vec3(env, "obstacle_max_half", c.obstacle_ranges.max_half);
  c.obstacle_ranges.clearance = env.get_double("obstacle_clearance", c.obstacle_ranges.clearance);

  c.static_obstacles = obstacles_from(cfg);

  try {
    c.validate(model.num_chains());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(cfg.source() + ": " + e.what());
  }
  return c;
}

bool FlagSet::all_goals() const {
  return !goal.empty() && std::all_of(goal.begin(), goal.end(), [](bool g) { return g; });
}

FlagSet evaluate_flags(std::span<const double> distances, bool collision, bool unstable,
                       double goal_radius, double boundary_radius) {
  FlagSet f;
  f.collision = collision;
  f.unstable = unstable;
  for (double d : distances) {
    f.goal.push_back(d <= goal_radius);
    f.boundary.push_back(d <= boundary_radius);
  }
  return f;
}

Eigen::VectorXd compute_reward(std::span<const double> distances, const FlagSet& flags,
                               const RewardParams& params) {
  const auto k = static_cast<Eigen::Index>(distances.size());
  if (static_cast<Eigen::Index>(flags.goal.size()) != k ||
      static_cast<Eigen::Index>(flags.boundary.size()) != k)
    throw std::invalid_argument("compute_reward: flag/task count mismatch");
  Eigen::VectorXd r(k);
  if (flags.all_goals()) {
    r.setConstant(params.kappa);
    return r;
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    double ri = -params.alpha * distances[i];
    if (flags.collision) ri -= params.n1;
    if (flags.unstable) ri -= params.n2;
    if (flags.boundary[i]) ri += params.m1;
    if (flags.goal[i]) ri += params.m2;
    r[i] = ri;
  }
  return r;
}

Score compute_score(const std::vector<Eigen::Vector3d>& goals,
                    const std::vector<Eigen::Vector3d>& end_effectors) {
  if (goals.size() != end_effectors.size())
    throw std::invalid_argument("compute_score: goal/end-effector count mismatch");
  Score s;
  double total = 0.0;
  for (std::size_t i = 0; i < goals.size(); ++i) {
    s.errors.push_back((goals[i] - end_effectors[i]).norm());
    total += s.errors.back();
  }
  s.score = -std::log(std::max(total, 1e-12));
  return s;
}

Environment::Environment(RobotModel model, EnvConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  config_.validate(model_.num_chains());
  q_ = model_.home();
  const Pose home = forward_kinematics(model_, q_);
  goals_ = home.end_effectors;
  if (config_.mode == SceneMode::kStaticScene) obstacles_ = config_.static_obstacles;
  refresh();
}

int Environment::state_size() const {
  int size = model_.num_joints() + 6 * model_.num_chains();
  if (config_.mode == SceneMode::kRandomObstacles) {
    const int per = config_.obstacle_ranges.shape == ObstacleShape::kSphere ? 4 : 6;
    size += per * config_.obstacle_count;
  }
  return size;
}

Eigen::VectorXd Environment::state() const {
  Eigen::VectorXd s(state_size());
  const int n = model_.num_joints();
  s.head(n) = q_;
  int at = n;
  for (const auto& e : pose_.end_effectors) {
    s.segment<3>(at) = e;
    at += 3;
  }
  for (const auto& g : goals_) {
    s.segment<3>(at) = g;
    at += 3;
  }
  if (config_.mode == SceneMode::kRandomObstacles) {
    for (const auto& o : obstacles_) {
      const int len = encoded_size(o);
      if (at + len > s.size()) throw std::logic_error("obstacle block exceeds state layout");
      encode(o, s.segment(at, len));
      at += len;
    }
    if (at != s.size()) throw std::logic_error("obstacle block does not fill state layout");
  }
  return s;
}

void Environment::refresh() {
  pose_ = forward_kinematics(model_, q_);
  distances_.resize(goals_.size());
  for (std::size_t i = 0; i < goals_.size(); ++i)
    distances_[i] = (goals_[i] - pose_.end_effectors[i]).norm();
  const bool cols = !obstacles_.empty() && check_collision(model_, pose_, obstacles_).colliding;
  flags_ = evaluate_flags(distances_, cols, !check_stability(model_, pose_), config_.goal_radius,
                          config_.boundary_radius);
}

Eigen::VectorXd Environment::reset(Rng& rng) {
  q_ = model_.home();
  steps_ = 0;
  goals_ = sample_goals(config_.goal_bounds, config_.goal_offsets, rng).goals;
  switch (config_.mode) {
    case SceneMode::kNoObstacles:
      obstacles_.clear();
      break;
    case SceneMode::kRandomObstacles:
      obstacles_ = sample_obstacles(config_.obstacle_count, config_.obstacle_ranges, model_, q_,
                                    goals_, config_.goal_clearance, rng)
                       .obstacles;
      break;
    case SceneMode::kStaticScene:
      obstacles_ = config_.static_obstacles;
      break;
  }
  refresh();
  return state();
}

void Environment::set_scene(const std::vector<Eigen::Vector3d>& goals,
                            std::vector<Obstacle> obstacles, const JointVector& q) {
  if (static_cast<int>(goals.size()) != model_.num_chains())
    throw std::invalid_argument("set_scene: need one goal per chain");
  if (q.size() != model_.num_joints()) throw std::invalid_argument("set_scene: joint count mismatch");
  if (config_.mode == SceneMode::kRandomObstacles &&
      static_cast<int>(obstacles.size()) != config_.obstacle_count)
    throw std::invalid_argument("set_scene: obstacle count does not match the state layout");
  goals_ = goals;
  obstacles_ = std::move(obstacles);
  q_ = clamp_to_limits(model_, q);
  steps_ = 0;
  refresh();
}

StepResult Environment::step(const Eigen::VectorXd& action) {
  if (action.size() != model_.num_joints())
    throw std::invalid_argument("step: expected " + std::to_string(model_.num_joints()) +
                                " joint velocities, got " + std::to_string(action.size()));
  const Eigen::VectorXd qdot =
      action.cwiseMax(-config_.action_bound).cwiseMin(config_.action_bound);
  q_ = clamp_to_limits(model_, q_ + qdot * config_.dt);
  ++steps_;
  refresh();

  StepResult result;
  result.next_state = state();
  result.rewards = compute_reward(distances_, flags_, config_.reward);
  result.flags = flags_;
  result.terminal = flags_.all_goals() || flags_.unstable;
  result.done = result.terminal || steps_ >= config_.max_steps;
  return result;
}

}  // namespace dualreach
