#include "dualreach/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dualreach/config.hpp"
#include "dualreach/smoothing.hpp"
#include "dualreach/svg.hpp"
#include "dualreach/trajectory_io.hpp"

namespace dualreach::cli {

using nlohmann::json;

Setup load_setup(const fs::path& config) {
  if (config.empty()) {
    RobotModel model = planar_dual_arm();
    EnvConfig env = planar_env_config();
    TrainConfig train = default_train_config(env.action_bound);
    return {std::move(model), std::move(env), std::move(train)};
  }
  const Config cfg = Config::load(config);
  RobotModel model = robot_from_config(cfg);
  EnvConfig env = env_config_from(cfg, model);
  TrainConfig train = train_config_from(cfg, env.action_bound);
  return {std::move(model), std::move(env), std::move(train)};
}

namespace {

void ensure_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw std::runtime_error("cannot create output directory " + out.string());
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string rng_state(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

ActorCritic load_compatible(const fs::path& checkpoint, const Environment& env) {
  ActorCritic agent = load_checkpoint(checkpoint);
  const auto expected = ActionPartition::from_model(env.model());
  if (agent.state_dim() != env.state_size() || agent.action_dim() != env.action_size() ||
      agent.partition().task_slots != expected.task_slots || agent.partition().shared != expected.shared)
    throw std::runtime_error("checkpoint " + checkpoint.string() + " (state " +
                             std::to_string(agent.state_dim()) + ", action " +
                             std::to_string(agent.action_dim()) + ") does not match the config (state " +
                             std::to_string(env.state_size()) + ", action " +
                             std::to_string(env.action_size()) + ")");
  return agent;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

void write_manifest(const RunManifest& m) {
  write_json(m.out / "manifest.json", {{"command", m.command},
                                       {"config", m.config.string()},
                                       {"seed", m.seed},
                                       {"out", m.out.string()}});
}

void cmd_train(const fs::path& config, std::uint64_t seed, const fs::path& out,
               std::optional<int> episodes, std::ostream* progress) {
  Setup setup = load_setup(config);
  if (episodes) {
    if (*episodes < 0) throw std::invalid_argument("--episodes must be non-negative");
    setup.train.max_episodes = *episodes;
  }
  ensure_dir(out);
  write_manifest({"train", config, seed, out});

  Environment env(setup.model, setup.env);
  Rng rng(seed);
  EpisodeCallback report;
  if (progress) {
    report = [progress](const EpisodeLog& e) {
      if ((e.episode + 1) % 50 == 0)
        *progress << "episode " << e.episode + 1 << " score " << e.score << (e.success ? " success" : "") << "\n";
    };
  }
  const TrainResult result = train(env, setup.train, rng, report);
  save_checkpoint(out / "checkpoint.bin", result.agent, rng_state(rng));
  write_score_csv(out / "scores.csv", result.log);
  std::vector<double> scores;
  for (const auto& e : result.log) scores.push_back(e.score);
  write_svg((out / "scores.svg").string(), score_plot(scores, 20));
}

void cmd_rollout(const fs::path& checkpoint, const fs::path& config, std::uint64_t seed, const fs::path& out) {
  const Setup setup = load_setup(config);
  Environment env(setup.model, setup.env);
  const ActorCritic agent = load_compatible(checkpoint, env);
  ensure_dir(out);
  write_manifest({"rollout", config, seed, out});

  Rng rng(seed);
  env.reset(rng);
  const Scene scene{env.goals(), env.obstacles()};
  const Rollout r = greedy_rollout(agent, env);

  JointTrajectory traj;
  traj.q.resize(static_cast<Eigen::Index>(r.steps.size()), env.action_size());
  std::vector<std::vector<Eigen::Vector3d>> ee;
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    traj.t.push_back(static_cast<double>(i));
    traj.q.row(static_cast<Eigen::Index>(i)) = r.steps[i].q.transpose();
    ee.push_back(r.steps[i].end_effectors);
  }
  write_trajectory_csv(out / "trajectory.csv", traj);
  write_end_effector_csv(out / "end_effectors.csv", traj.t, ee);
  write_scene(out / "scene.ini", scene);

  bool any_collision = false;
  for (const auto& s : r.steps) any_collision = any_collision || s.flags.collision;
  json goals = json::array();
  for (const auto& g : scene.goals) goals.push_back(vec_json(g));
  write_json(out / "flags.json", {{"steps", static_cast<int>(r.steps.size()) - 1},
                                  {"cols", any_collision},
                                  {"collision_steps", r.collision_steps},
                                  {"unstable", r.unstable},
                                  {"success", r.success},
                                  {"initial_score", r.initial_score.score},
                                  {"final_score", r.final_score.score},
                                  {"final_errors", r.final_score.errors},
                                  {"goals", goals}});
}

void cmd_smooth(const fs::path& trajectory, const fs::path& config, const fs::path& scene_path,
                const fs::path& out, double precision) {
  const Setup setup = load_setup(config);
  const JointTrajectory traj = read_trajectory_csv(trajectory);
  if (traj.joints() != setup.model.num_joints())
    throw std::runtime_error(trajectory.string() + " has " + std::to_string(traj.joints()) +
                             " joints but the robot has " + std::to_string(setup.model.num_joints()));
  const Scene scene = scene_path.empty() ? Scene{} : read_scene(scene_path);
  ensure_dir(out);
  write_manifest({"smooth", config, 0, out});

  SmoothingOptions options;
  options.precision = precision;
  std::vector<int> joints(static_cast<std::size_t>(traj.joints()));
  for (int j = 0; j < traj.joints(); ++j) joints[static_cast<std::size_t>(j)] = j;
  const SmoothingResult result =
      spline_fit_all(traj, joints, scene_predicate(setup.model, scene.obstacles), options);

  write_trajectory_csv(out / "smoothed.csv", result.smoothed);
  const JointTrajectory dense = sample_trajectory(result.splines, options.subdivisions);
  write_trajectory_csv(out / "smoothed_dense.csv", dense);
  write_smoothing_report(out / "smoothing_report.csv", result.report);

  for (int j = 0; j < traj.joints(); ++j) {
    Plot p;
    p.title = "Joint " + std::to_string(j) + " (p = " + format_double(result.report[static_cast<std::size_t>(j)].p) + ")";
    p.xlabel = "step";
    p.ylabel = "q [rad]";
    Series knots{traj.t, {}, "knots", "#d62728", true};
    for (int r = 0; r < traj.knots(); ++r) knots.y.push_back(traj.q(r, j));
    Series line{dense.t, {}, "smoothed", "#1f77b4", false};
    for (int r = 0; r < dense.knots(); ++r) line.y.push_back(dense.q(r, j));
    p.series = {std::move(knots), std::move(line)};
    write_svg((out / ("smoothing_q" + std::to_string(j) + ".svg")).string(), p);
  }

  Plot ee;
  ee.title = "End-effector paths (x-z)";
  ee.xlabel = "x [m]";
  ee.ylabel = "z [m]";
  const char* colors[] = {"#1f77b4", "#2ca02c", "#9467bd", "#8c564b"};
  const int k = setup.model.num_chains();
  std::vector<Series> dots(static_cast<std::size_t>(k)), lines(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    dots[static_cast<std::size_t>(c)].dots = true;
    dots[static_cast<std::size_t>(c)].color = "#d62728";
    lines[static_cast<std::size_t>(c)].color = colors[c % 4];
    lines[static_cast<std::size_t>(c)].label = setup.model.chains()[static_cast<std::size_t>(c)].name;
  }
  for (int r = 0; r < traj.knots(); ++r) {
    const auto pts = end_effectors(setup.model, traj.q.row(r).transpose());
    for (int c = 0; c < k; ++c) {
      dots[static_cast<std::size_t>(c)].x.push_back(pts[static_cast<std::size_t>(c)].x());
      dots[static_cast<std::size_t>(c)].y.push_back(pts[static_cast<std::size_t>(c)].z());
    }
  }
  for (int r = 0; r < dense.knots(); ++r) {
    const auto pts = end_effectors(setup.model, dense.q.row(r).transpose());
    for (int c = 0; c < k; ++c) {
      lines[static_cast<std::size_t>(c)].x.push_back(pts[static_cast<std::size_t>(c)].x());
      lines[static_cast<std::size_t>(c)].y.push_back(pts[static_cast<std::size_t>(c)].z());
    }
  }
  for (auto& s : dots) ee.series.push_back(std::move(s));
  for (auto& s : lines) ee.series.push_back(std::move(s));
  write_svg((out / "smoothing_ee.svg").string(), ee);
}

json cmd_eval(const fs::path& checkpoint, const fs::path& config, int episodes, std::uint64_t seed,
              const fs::path& out) {
  if (episodes < 0) throw std::invalid_argument("--episodes must be non-negative");
  const Setup setup = load_setup(config);
  Environment env(setup.model, setup.env);
  const ActorCritic agent = load_compatible(checkpoint, env);
  ensure_dir(out);
  write_manifest({"eval", config, seed, out});

  std::vector<double> scores;
  int successes = 0;
  long collision_steps = 0;
  long steps = 0;
  for (int i = 0; i < episodes; ++i) {
    Rng rng(seed ^ static_cast<std::uint64_t>(i));
    env.reset(rng);
    const Rollout r = greedy_rollout(agent, env);
    scores.push_back(r.final_score.score);
    successes += r.success ? 1 : 0;
    collision_steps += r.collision_steps;
    steps += static_cast<long>(r.steps.size()) - 1;
  }
  json m = {{"episodes", episodes}};
  if (episodes > 0) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= episodes;
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    m["score_mean"] = mean;
    m["score_std"] = std::sqrt(var / episodes);
    m["success_rate"] = static_cast<double>(successes) / episodes;
    m["collision_rate"] = steps > 0 ? static_cast<double>(collision_steps) / static_cast<double>(steps) : 0.0;
    m["mean_steps"] = static_cast<double>(steps) / episodes;
  } else {
    m["score_mean"] = nullptr;
    m["score_std"] = nullptr;
    m["success_rate"] = nullptr;
    m["collision_rate"] = nullptr;
    m["mean_steps"] = nullptr;
  }
  write_json(out / "metrics.json", m);
  return m;
}

int run(int argc, char** argv) {
  CLI::App app{"Dual-arm reaching with a shared torso: training, rollout, smoothing, evaluation"};
  app.require_subcommand(1);

  std::string config, out = "out", checkpoint, scene;
  std::uint64_t seed = 0;
  int episodes = -1;
  double precision = 1e-6;

  auto* train_cmd = app.add_subcommand("train", "train a policy; writes checkpoint, scores.csv, scores.svg");
  train_cmd->add_option("--config", config, "config file (default: planar robot, no obstacles)")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", seed, "RNG seed");
  train_cmd->add_option("--out", out, "output directory");
  train_cmd->add_option("--episodes", episodes, "override [train] max_episodes")->check(CLI::NonNegativeNumber);

  auto* rollout_cmd = app.add_subcommand("rollout", "noise-free rollout of a trained policy");
  rollout_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  rollout_cmd->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  rollout_cmd->add_option("--seed", seed, "scene seed");
  rollout_cmd->add_option("--out", out, "output directory");

  auto* smooth_cmd = app.add_subcommand("smooth", "smooth a joint trajectory CSV under scene constraints");
  std::string trajectory;
  smooth_cmd->add_option("trajectory", trajectory, "trajectory CSV (t,q0,...)")->required()->check(CLI::ExistingFile);
  smooth_cmd->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  smooth_cmd->add_option("--scene", scene, "scene file with [obstacle] sections")->check(CLI::ExistingFile);
  smooth_cmd->add_option("--out", out, "output directory");
  smooth_cmd->add_option("--precision", precision, "bisection precision on p")->check(CLI::Range(1e-12, 0.5));

  auto* eval_cmd = app.add_subcommand("eval", "aggregate greedy-policy metrics over seeded episodes");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--config", config, "config file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--seed", seed, "base seed");
  eval_cmd->add_option("--episodes", episodes, "number of episodes (default 100)")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      cmd_train(config, seed, out, episodes >= 0 ? std::optional<int>(episodes) : std::nullopt, &std::cerr);
    } else if (*rollout_cmd) {
      cmd_rollout(checkpoint, config, seed, out);
    } else if (*smooth_cmd) {
      cmd_smooth(trajectory, config, scene, out, precision);
    } else if (*eval_cmd) {
      const json m = cmd_eval(checkpoint, config, episodes >= 0 ? episodes : 100, seed, out);
      std::cout << m.dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace dualreach::cli
