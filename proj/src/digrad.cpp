#include "dualreach/digrad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "dualreach/checkpoint.hpp"
#include "dualreach/config.hpp"

namespace dualreach {

using nn::Matrix;

ActionPartition ActionPartition::make(int action_dim, std::vector<std::vector<int>> task_slots,
                                      std::vector<int> shared) {
  if (action_dim <= 0) throw std::invalid_argument("action dimension must be positive");
  if (task_slots.empty()) throw std::invalid_argument("at least one task is required");
  ActionPartition p;
  p.action_dim = action_dim;
  auto check_range = [&](int j) {
    if (j < 0 || j >= action_dim)
      throw std::invalid_argument("action slot " + std::to_string(j) + " out of range");
  };
  for (auto& slots : task_slots) {
    if (slots.empty()) throw std::invalid_argument("task with no action slots");
    std::sort(slots.begin(), slots.end());
    if (std::adjacent_find(slots.begin(), slots.end()) != slots.end())
      throw std::invalid_argument("duplicate action slot within a task");
    for (int j : slots) check_range(j);
  }
  std::sort(shared.begin(), shared.end());
  shared.erase(std::unique(shared.begin(), shared.end()), shared.end());
  for (int j : shared) {
    check_range(j);
    for (const auto& slots : task_slots)
      if (!std::binary_search(slots.begin(), slots.end(), j))
        throw std::invalid_argument("shared slot " + std::to_string(j) + " missing from a task");
  }
  std::vector<int> owner(action_dim, -1);
  for (std::size_t i = 0; i < task_slots.size(); ++i) {
    std::vector<int> ex;
    for (int j : task_slots[i]) {
      if (std::binary_search(shared.begin(), shared.end(), j)) continue;
      if (owner[j] >= 0)
        throw std::invalid_argument("action slot " + std::to_string(j) +
                                    " belongs to two tasks but is not shared");
      owner[j] = static_cast<int>(i);
      ex.push_back(j);
    }
    p.exclusive.push_back(std::move(ex));
  }
  p.task_slots = std::move(task_slots);
  p.shared = std::move(shared);
  return p;
}

ActionPartition ActionPartition::from_model(const RobotModel& model) {
  std::vector<std::vector<int>> slots;
  for (const auto& chain : model.chains()) slots.push_back(chain.joints);
  return make(model.num_joints(), std::move(slots), model.shared_joints());
}

Matrix ActionPartition::mask(const Matrix& actions, int task) const {
  Matrix out = Matrix::Zero(actions.rows(), actions.cols());
  for (int j : task_slots.at(task)) out.row(j) = actions.row(j);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& compound, const std::vector<int>& slots) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) out[static_cast<Eigen::Index>(i)] = compound[slots[i]];
  return out;
}

double NoiseSchedule::sigma(int episode) const {
  return std::max(sigma_min, sigma0 * std::pow(decay, episode));
}

Eigen::VectorXd exploration_noise(const NoiseSchedule& schedule, int episode, int dim, Rng& rng) {
  std::normal_distribution<double> n(0.0, schedule.sigma(episode));
  Eigen::VectorXd out(dim);
  for (int i = 0; i < dim; ++i) out[i] = n(rng);
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must be in [0, 1)");
  if (!(tau > 0.0 && tau < 1.0)) fail("tau must be in (0, 1)");
  if (!(critic_l2 >= 0.0)) fail("critic_l2 must be non-negative");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (max_episodes < 0) fail("max_episodes must be non-negative");
  if (max_steps <= 0) fail("max_steps must be positive");
  if (replay_capacity < static_cast<std::size_t>(batch_size)) fail("replay capacity below batch size");
  if (!(agent.actor_lr > 0.0) || !(agent.critic_lr > 0.0)) fail("learning rates must be positive");
  if (!(noise.sigma0 >= 0.0) || !(noise.sigma_min >= 0.0) || !(noise.decay > 0.0 && noise.decay <= 1.0))
    fail("bad noise schedule");
  if (noise.sigma_min > noise.sigma0) fail("noise sigma_min exceeds sigma0");
  for (const auto* s : {&agent.actor, &agent.critic}) {
    if (s->hidden.empty()) fail("at least one hidden layer is required");
    for (int h : s->hidden)
      if (h <= 0) fail("hidden widths must be positive");
    if (!(s->keep_prob > 0.0 && s->keep_prob <= 1.0)) fail("keep_prob must be in (0, 1]");
  }
}

TrainConfig default_train_config(double action_bound) {
  TrainConfig c;
  c.noise.sigma0 = 0.3 * action_bound;
  return c;
}

namespace {

NetworkShape shape_from(const ConfigSection& s, const std::string& prefix, NetworkShape shape) {
  if (s.has(prefix + "_hidden")) {
    shape.hidden.clear();
    for (long w : s.get_ints(prefix + "_hidden")) shape.hidden.push_back(static_cast<int>(w));
  }
  shape.keep_prob = s.get_double(prefix + "_keep_prob", s.get_double("keep_prob", shape.keep_prob));
  shape.batchnorm = s.get_bool(prefix + "_batchnorm", s.get_bool("batchnorm", shape.batchnorm));
  return shape;
}

}  // namespace

TrainConfig train_config_from(const Config& cfg, double action_bound) {
  TrainConfig c = default_train_config(action_bound);
  const auto& s = cfg.section_or_empty("train");
  c.agent.actor = shape_from(s, "actor", c.agent.actor);
  c.agent.critic = shape_from(s, "critic", c.agent.critic);
  c.agent.actor_lr = s.get_double("actor_lr", c.agent.actor_lr);
  c.agent.critic_lr = s.get_double("critic_lr", c.agent.critic_lr);
  c.gamma = s.get_double("gamma", c.gamma);
  c.tau = s.get_double("tau", c.tau);
  const std::string form = s.get_string("target_update", "standard");
  if (form == "standard") {
    c.target_update = TargetUpdate::kStandard;
  } else if (form == "as-printed") {
    c.target_update = TargetUpdate::kAsPrinted;
  } else {
    throw ConfigError("[train] target_update: expected standard or as-printed, got '" + form + "'");
  }
  c.critic_l2 = s.get_double("critic_l2", c.critic_l2);
  c.batch_size = static_cast<int>(s.get_int("batch_size", c.batch_size));
  c.max_episodes = static_cast<int>(s.get_int("max_episodes", c.max_episodes));
  c.max_steps = static_cast<int>(s.get_int("max_steps", c.max_steps));
  const long cap = s.get_int("replay_capacity", static_cast<long>(c.replay_capacity));
  if (cap <= 0) throw ConfigError("[train] replay_capacity must be positive");
  c.replay_capacity = static_cast<std::size_t>(cap);
  c.noise.sigma0 = s.get_double("noise_sigma0", c.noise.sigma0);
  c.noise.decay = s.get_double("noise_decay", c.noise.decay);
  c.noise.sigma_min = s.get_double("noise_sigma_min", c.noise.sigma_min);
  c.shared_update = s.get_bool("shared_update", c.shared_update);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Networks

nn::Network build_actor(int state_dim, int action_dim, const NetworkShape& shape, nn::Rng& rng) {
  std::vector<nn::LayerSpec> specs;
  if (shape.batchnorm) specs.push_back(nn::LayerSpec::batchnorm());
  for (int h : shape.hidden) {
    specs.push_back(nn::LayerSpec::dense(h));
    if (shape.batchnorm) specs.push_back(nn::LayerSpec::batchnorm());
    specs.push_back(nn::LayerSpec::crelu());
    if (shape.keep_prob < 1.0) specs.push_back(nn::LayerSpec::dropout(shape.keep_prob));
  }
  specs.push_back(nn::LayerSpec::dense(action_dim, nn::Init::kUniformRange, 3e-3));
  specs.push_back(nn::LayerSpec::tanh());
  return nn::Network(state_dim, std::move(specs), rng);
}

nn::Network build_critic(int state_dim, int action_dim, int tasks, const NetworkShape& shape,
                         nn::Rng& rng) {
  std::vector<nn::LayerSpec> specs;
  for (std::size_t l = 0; l < shape.hidden.size(); ++l) {
    specs.push_back(nn::LayerSpec::dense(shape.hidden[l]));
    if (l == 0 && shape.batchnorm) specs.push_back(nn::LayerSpec::batchnorm());
    specs.push_back(nn::LayerSpec::crelu());
    if (shape.keep_prob < 1.0) specs.push_back(nn::LayerSpec::dropout(shape.keep_prob));
  }
  specs.push_back(nn::LayerSpec::dense(tasks, nn::Init::kUniformRange, 3e-3));
  return nn::Network(state_dim + action_dim + tasks, std::move(specs), rng);
}

// ---------------------------------------------------------------------------
// ActorCritic

ActorCritic::ActorCritic(int state_dim, ActionPartition partition, double action_bound,
                         const AgentConfig& config, Rng& rng)
    : state_dim_(state_dim), partition_(std::move(partition)), action_bound_(action_bound) {
  if (state_dim <= 0) throw std::invalid_argument("state dimension must be positive");
  if (!(action_bound > 0.0)) throw std::invalid_argument("action bound must be positive");
  actor = build_actor(state_dim, partition_.action_dim, config.actor, rng);
  critic = build_critic(state_dim, partition_.action_dim, partition_.num_tasks(), config.critic, rng);
  target_actor = actor;
  target_critic = critic;
  actor_opt = nn::make_adam(actor, {config.actor_lr});
  critic_opt = nn::make_adam(critic, {config.critic_lr});
}

Matrix ActorCritic::act(const Matrix& states) const { return action_bound_ * actor.predict(states); }

Eigen::VectorXd ActorCritic::act(const Eigen::VectorXd& state) const {
  return action_bound_ * actor.predict(state);
}

Matrix ActorCritic::target_act(const Matrix& states) const {
  return action_bound_ * target_actor.predict(states);
}

Matrix ActorCritic::critic_input(const Matrix& states, const Matrix& actions, int task) const {
  const Eigen::Index b = states.cols();
  const int a = partition_.action_dim;
  const int k = partition_.num_tasks();
  Matrix x = Matrix::Zero(state_dim_ + a + k, b);
  x.topRows(state_dim_) = states;
  for (int j : partition_.task_slots.at(task)) x.row(state_dim_ + j) = actions.row(j);
  x.row(state_dim_ + a + task).setOnes();
  return x;
}

namespace {

// Tasks stacked side by side: columns [i*B, (i+1)*B) hold task i.
Matrix stacked_input(const ActorCritic& ac, const Matrix& states, const Matrix& actions) {
  const Eigen::Index b = states.cols();
  const int k = ac.num_tasks();
  Matrix x(ac.state_dim() + ac.action_dim() + k, k * b);
  for (int i = 0; i < k; ++i) x.middleCols(i * b, b) = ac.critic_input(states, actions, i);
  return x;
}

}  // namespace

Eigen::RowVectorXd ActorCritic::q_values(const Matrix& states, const Matrix& actions, int task) const {
  return critic.predict(critic_input(states, actions, task)).row(task);
}

Matrix ActorCritic::compute_targets(const Batch& batch, double gamma) const {
  const Eigen::Index b = batch.size();
  const int k = num_tasks();
  const Matrix next_actions = target_act(batch.next_states);
  const Matrix q = target_critic.predict(stacked_input(*this, batch.next_states, next_actions));
  Matrix y(k, b);
  for (int i = 0; i < k; ++i)
    for (Eigen::Index c = 0; c < b; ++c)
      y(i, c) = batch.rewards(i, c) + gamma * (1.0 - batch.done[c]) * q(i, i * b + c);
  return y;
}

double ActorCritic::critic_loss_and_grad(const Batch& batch, const Matrix& targets, double l2,
                                         nn::Mode mode, nn::Rng* rng) {
  const Eigen::Index b = batch.size();
  const int k = num_tasks();
  critic.zero_grad();
  const Matrix q = critic.forward(stacked_input(*this, batch.states, batch.actions), mode, rng);
  Matrix dq = Matrix::Zero(k, k * b);
  double loss = 0.0;
  for (int i = 0; i < k; ++i)
    for (Eigen::Index c = 0; c < b; ++c) {
      const double diff = q(i, i * b + c) - targets(i, c);
      loss += diff * diff;
      dq(i, i * b + c) = 2.0 * diff / static_cast<double>(b);
    }
  loss /= static_cast<double>(b);
  critic.backward(dq);
  return loss + nn::add_l2_penalty(critic, l2);
}

double ActorCritic::critic_update(const Batch& batch, const Matrix& targets, double l2, nn::Rng& rng) {
  const double loss = critic_loss_and_grad(batch, targets, l2, nn::Mode::kTrain, &rng);
  nn::adam_step(critic_opt, critic);
  return loss;
}

Matrix ActorCritic::action_gradient(const Matrix& states, const Matrix& actions, bool shared) {
  const Eigen::Index b = states.cols();
  const int k = num_tasks();
  critic.forward(stacked_input(*this, states, actions), nn::Mode::kEval);
  Matrix dy = Matrix::Zero(k, k * b);
  for (int i = 0; i < k; ++i) dy.row(i).segment(i * b, b).setOnes();
  const Matrix dx = critic.backward(dy, /*accumulate=*/false);

  Matrix g = Matrix::Zero(partition_.action_dim, b);
  if (shared) {
    for (int i = 0; i < k; ++i)
      for (int j : partition_.exclusive[i]) g.row(j) = dx.row(state_dim_ + j).segment(i * b, b);
    for (int j : partition_.shared) {
      for (int i = 0; i < k; ++i) g.row(j) += dx.row(state_dim_ + j).segment(i * b, b);
      g.row(j) /= static_cast<double>(k);
    }
  } else {
    for (int i = 0; i < k; ++i)
      for (int j : partition_.task_slots[i]) g.row(j) += dx.row(state_dim_ + j).segment(i * b, b);
  }
  return g;
}

double ActorCritic::actor_gradient(const Matrix& states, bool shared, nn::Mode mode, nn::Rng* rng) {
  const Eigen::Index b = states.cols();
  actor.zero_grad();
  const Matrix actions = action_bound_ * actor.forward(states, mode, rng);
  const Matrix g = action_gradient(states, actions, shared);
  double objective = 0.0;
  for (int i = 0; i < num_tasks(); ++i) objective += q_values(states, actions, i).sum();
  // Ascend J: descend -J / B through the bound scaling.
  actor.backward(-(action_bound_ / static_cast<double>(b)) * g);
  return objective / static_cast<double>(b);
}

void ActorCritic::actor_update(const Matrix& states, bool shared, nn::Rng& rng) {
  const Eigen::Index b = states.cols();
  actor.zero_grad();
  const Matrix actions = action_bound_ * actor.forward(states, nn::Mode::kTrain, &rng);
  const Matrix g = action_gradient(states, actions, shared);
  actor.backward(-(action_bound_ / static_cast<double>(b)) * g);
  nn::adam_step(actor_opt, actor);
}

namespace {

void blend(nn::Network& target, const nn::Network& online, double tau, TargetUpdate form) {
  auto dst = target.state_arrays();
  const auto src = online.state_arrays();
  const double keep = form == TargetUpdate::kStandard ? 1.0 - tau : tau;
  const double take = 1.0 - keep;
  for (std::size_t a = 0; a < dst.size(); ++a)
    for (std::size_t i = 0; i < dst[a].size(); ++i) dst[a][i] = keep * dst[a][i] + take * src[a][i];
}

}  // namespace

void ActorCritic::soft_update(double tau, TargetUpdate form) {
  blend(target_actor, actor, tau, form);
  blend(target_critic, critic, tau, form);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'D', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_ints(nn::BinaryWriter& w, const std::vector<int>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (int x : v) w.u32(static_cast<std::uint32_t>(x));
}

std::vector<int> read_ints(nn::BinaryReader& r) {
  const auto n = r.u32();
  if (n > 4096) throw nn::CheckpointError("implausible slot list");
  std::vector<int> v(n);
  for (auto& x : v) x = static_cast<int>(r.u32());
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ActorCritic& agent,
                     const std::string& rng_state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw nn::CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  nn::BinaryWriter w(out);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(agent.state_dim()));
  w.u32(static_cast<std::uint32_t>(agent.action_dim()));
  w.f64(agent.action_bound());
  const auto& p = agent.partition();
  w.u32(static_cast<std::uint32_t>(p.num_tasks()));
  for (const auto& slots : p.task_slots) write_ints(w, slots);
  write_ints(w, p.shared);
  nn::write_network(w, agent.actor);
  nn::write_network(w, agent.critic);
  nn::write_network(w, agent.target_actor);
  nn::write_network(w, agent.target_critic);
  nn::write_adam(w, agent.actor_opt);
  nn::write_adam(w, agent.critic_opt);
  w.bytes(rng_state);
  if (!out) throw nn::CheckpointError("write failed: " + path.string());
}

ActorCritic load_checkpoint(const std::filesystem::path& path, std::string* rng_state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw nn::CheckpointError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || !std::equal(magic, magic + 4, kMagic))
    throw nn::CheckpointError(path.string() + " is not a checkpoint");
  nn::BinaryReader r(in);
  const auto version = r.u32();
  if (version != kVersion)
    throw nn::CheckpointError("unsupported checkpoint version " + std::to_string(version));
  ActorCritic ac;
  ac.state_dim_ = static_cast<int>(r.u32());
  const int action_dim = static_cast<int>(r.u32());
  ac.action_bound_ = r.f64();
  const auto k = r.u32();
  if (k == 0 || k > 64) throw nn::CheckpointError("implausible task count");
  std::vector<std::vector<int>> slots;
  for (std::uint32_t i = 0; i < k; ++i) slots.push_back(read_ints(r));
  auto shared = read_ints(r);
  try {
    ac.partition_ = ActionPartition::make(action_dim, std::move(slots), std::move(shared));
  } catch (const std::invalid_argument& e) {
    throw nn::CheckpointError(std::string("bad action partition: ") + e.what());
  }
  ac.actor = nn::read_network(r);
  ac.critic = nn::read_network(r);
  ac.target_actor = nn::read_network(r);
  ac.target_critic = nn::read_network(r);
  ac.actor_opt = nn::read_adam(r);
  ac.critic_opt = nn::read_adam(r);
  std::string rng = r.bytes();
  if (ac.actor.input_dim() != ac.state_dim_ || ac.actor.output_dim() != action_dim ||
      ac.critic.input_dim() != ac.state_dim_ + action_dim + static_cast<int>(k) ||
      ac.critic.output_dim() != static_cast<int>(k) ||
      ac.target_actor.specs().size() != ac.actor.specs().size() ||
      ac.target_critic.specs().size() != ac.critic.specs().size())
    throw nn::CheckpointError("checkpoint networks do not match the recorded dimensions");
  if (ac.actor_opt.m.size() != ac.actor.parameters().size() ||
      ac.critic_opt.m.size() != ac.critic.parameters().size())
    throw nn::CheckpointError("optimizer state does not match the networks");
  if (rng_state) *rng_state = std::move(rng);
  return ac;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train(Environment& env, const TrainConfig& config, Rng& rng,
                  const EpisodeCallback& on_episode) {
  config.validate();
  const double bound = env.config().action_bound;
  TrainResult result{ActorCritic(env.state_size(), ActionPartition::from_model(env.model()), bound,
                                 config.agent, rng),
                     {}};
  ActorCritic& agent = result.agent;
  ReplayBuffer buffer(config.replay_capacity);

  for (int ep = 0; ep < config.max_episodes; ++ep) {
    Eigen::VectorXd state = env.reset(rng);
    EpisodeLog log;
    log.episode = ep;
    for (int t = 0; t < config.max_steps; ++t) {
      Eigen::VectorXd action = agent.act(state) + exploration_noise(config.noise, ep, agent.action_dim(), rng);
      action = action.cwiseMax(-bound).cwiseMin(bound);
      StepResult step = env.step(action);
      ++log.steps;
      if (step.flags.collision) ++log.collision_steps;
      log.unstable = log.unstable || step.flags.unstable;
      buffer.push({state, action, step.next_state, step.rewards, step.terminal});

      if (buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
        const Batch batch = buffer.sample(static_cast<std::size_t>(config.batch_size), rng);
        const Matrix targets = agent.compute_targets(batch, config.gamma);
        agent.critic_update(batch, targets, config.critic_l2, rng);
        agent.actor_update(batch.states, config.shared_update, rng);
        agent.soft_update(config.tau, config.target_update);
      }
      state = std::move(step.next_state);
      if (step.done) break;
    }
    const Score score = env.score();
    log.errors = score.errors;
    log.score = score.score;
    log.success = env.flags().all_goals();
    if (on_episode) on_episode(log);
    result.log.push_back(std::move(log));
  }
  return result;
}

Rollout greedy_rollout(const ActorCritic& agent, Environment& env) {
  Rollout r;
  r.initial_score = env.score();
  r.steps.push_back({env.joints(), env.end_effectors(), env.flags(), {}});
  Eigen::VectorXd state = env.state();
  const int budget = env.config().max_steps;
  for (int t = env.steps(); t < budget; ++t) {
    StepResult step = env.step(agent.act(state));
    r.steps.push_back({env.joints(), env.end_effectors(), step.flags, step.rewards});
    if (step.flags.collision) ++r.collision_steps;
    r.unstable = r.unstable || step.flags.unstable;
    state = std::move(step.next_state);
    if (step.done) break;
  }
  r.final_score = env.score();
  r.success = env.flags().all_goals();
  return r;
}

}  // namespace dualreach
