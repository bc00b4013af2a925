// Multi-task actor-critic learner with differential policy gradients.
//
// One compound actor outputs every joint velocity. The critic has one head
// per task; head i scores task i's sub-action (its slots of the compound
// action, other slots zeroed) with a one-hot task selector appended. Actor
// updates chain each head's action gradient through that task's slots;
// slots shared by all tasks receive the task-average instead of the sum.
#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dualreach/environment.hpp"
#include "dualreach/nnet.hpp"

namespace dualreach {

class Config;

// Maps compound-action slots to tasks.
struct ActionPartition {
  int action_dim = 0;
  std::vector<std::vector<int>> task_slots;  // a_i (sorted)
  std::vector<int> shared;                   // a_s, present in every a_i
  std::vector<std::vector<int>> exclusive;   // a_i minus a_s

  // Validates: exclusive sets pairwise disjoint, every shared slot in every
  // task, indices in range.
  static ActionPartition make(int action_dim, std::vector<std::vector<int>> task_slots,
                              std::vector<int> shared);
  // Slot j drives joint j; tasks are the model's chains.
  static ActionPartition from_model(const RobotModel& model);

  int num_tasks() const { return static_cast<int>(task_slots.size()); }
  // Sub-action of task i with non-task slots zeroed (the critic's view).
  nn::Matrix mask(const nn::Matrix& actions, int task) const;
};

// Gathers the listed rows of a compound action (sub-policy views).
Eigen::VectorXd gather(const Eigen::VectorXd& compound, const std::vector<int>& slots);

struct NoiseSchedule {
  double sigma0 = 0.3;  // rad/s
  double decay = 0.999;
  double sigma_min = 0.01;

  double sigma(int episode) const;
};

Eigen::VectorXd exploration_noise(const NoiseSchedule& schedule, int episode, int dim, Rng& rng);

enum class TargetUpdate {
  kStandard,   // target <- (1 - tau) * target + tau * online
  kAsPrinted,  // target <- tau * target + (1 - tau) * online
};

struct NetworkShape {
  std::vector<int> hidden = {128, 64};  // pre-activation widths; CReLU doubles them
  double keep_prob = 0.8;
  bool batchnorm = true;  // actor: input and every hidden layer; critic: first hidden only
};

struct AgentConfig {
  NetworkShape actor;
  NetworkShape critic;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
};

struct TrainConfig {
  AgentConfig agent;
  double gamma = 0.99;
  double tau = 0.001;
  TargetUpdate target_update = TargetUpdate::kStandard;
  double critic_l2 = 0.01;
  int batch_size = 64;
  int max_episodes = 2000;
  int max_steps = 150;
  std::size_t replay_capacity = 45000;
  NoiseSchedule noise;
  bool shared_update = true;  // average shared-slot gradients over tasks

  void validate() const;
};

// Defaults scaled to an action bound (noise sigma0 = 0.3 * bound).
TrainConfig default_train_config(double action_bound);
// Reads the [train] section on top of default_train_config.
TrainConfig train_config_from(const Config& cfg, double action_bound);

struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  Eigen::VectorXd next_state;
  Eigen::VectorXd rewards;
  bool done = false;  // terminal: no bootstrap from next_state
};

struct Batch {
  nn::Matrix states;       // S x B
  nn::Matrix actions;      // A x B
  nn::Matrix next_states;  // S x B
  nn::Matrix rewards;      // k x B
  Eigen::VectorXd done;    // B, 1.0 for terminal

  int size() const { return static_cast<int>(states.cols()); }
};

Batch make_batch(const std::vector<Transition>& transitions);

// FIFO ring buffer with uniform sampling (without replacement within a batch).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  Batch sample(std::size_t n, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

class ActorCritic {
 public:
  ActorCritic(int state_dim, ActionPartition partition, double action_bound,
              const AgentConfig& config, Rng& rng);

  int state_dim() const { return state_dim_; }
  int action_dim() const { return partition_.action_dim; }
  int num_tasks() const { return partition_.num_tasks(); }
  double action_bound() const { return action_bound_; }
  const ActionPartition& partition() const { return partition_; }

  // Greedy compound action from the online actor (eval mode), within
  // +-action_bound componentwise.
  nn::Matrix act(const nn::Matrix& states) const;
  Eigen::VectorXd act(const Eigen::VectorXd& state) const;
  nn::Matrix target_act(const nn::Matrix& states) const;

  // Critic input for task i: state, masked sub-action, task one-hot.
  nn::Matrix critic_input(const nn::Matrix& states, const nn::Matrix& actions, int task) const;
  // Q_i from the online critic in eval mode (1 x B).
  Eigen::RowVectorXd q_values(const nn::Matrix& states, const nn::Matrix& actions, int task) const;

  // y_i = r_i + gamma * (1 - done) * Q'_i(s', mu'(s')), one row per task.
  nn::Matrix compute_targets(const Batch& batch, double gamma) const;

  // Fills the critic gradients for mean_b sum_i (Q_i - y_i)^2 + lambda*|W|^2
  // and returns that loss. `rng` may be null when no dropout is active.
  double critic_loss_and_grad(const Batch& batch, const nn::Matrix& targets, double l2,
                              nn::Mode mode, nn::Rng* rng);
  double critic_update(const Batch& batch, const nn::Matrix& targets, double l2, nn::Rng& rng);

  // Per-sample dJ/da (A x B) with the critic frozen in eval mode. With
  // `shared`, shared slots get the task average; otherwise every task's
  // gradient is summed into its slots.
  nn::Matrix action_gradient(const nn::Matrix& states, const nn::Matrix& actions, bool shared);
  // Fills the actor gradients for minimizing -J averaged over the batch;
  // returns the batch-mean objective sum_i Q_i.
  double actor_gradient(const nn::Matrix& states, bool shared, nn::Mode mode, nn::Rng* rng);
  void actor_update(const nn::Matrix& states, bool shared, nn::Rng& rng);

  void soft_update(double tau, TargetUpdate form = TargetUpdate::kStandard);

  nn::Network actor;
  nn::Network critic;
  nn::Network target_actor;
  nn::Network target_critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;

 private:
  friend ActorCritic load_checkpoint(const std::filesystem::path&, std::string*);
  ActorCritic() = default;

  int state_dim_ = 0;
  ActionPartition partition_;
  double action_bound_ = 1.0;
};

nn::Network build_actor(int state_dim, int action_dim, const NetworkShape& shape, nn::Rng& rng);
nn::Network build_critic(int state_dim, int action_dim, int tasks, const NetworkShape& shape,
                         nn::Rng& rng);

// Versioned binary checkpoint: metadata, four networks, both optimizers and
// the serialized RNG state.
void save_checkpoint(const std::filesystem::path& path, const ActorCritic& agent,
                     const std::string& rng_state);
ActorCritic load_checkpoint(const std::filesystem::path& path, std::string* rng_state = nullptr);

struct EpisodeLog {
  int episode = 0;
  std::vector<double> errors;
  double score = 0.0;
  int steps = 0;
  bool success = false;      // every goal reached at the final step
  int collision_steps = 0;
  bool unstable = false;
};

struct TrainResult {
  ActorCritic agent;
  std::vector<EpisodeLog> log;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

// The training loop: per episode resample the scene, then per step act with
// decaying Gaussian noise, store the transition, and (once the buffer holds a
// batch) run one critic step, one actor step and one target blend.
TrainResult train(Environment& env, const TrainConfig& config, Rng& rng,
                  const EpisodeCallback& on_episode = {});

struct RolloutStep {
  JointVector q;
  std::vector<Eigen::Vector3d> end_effectors;
  FlagSet flags;
  Eigen::VectorXd rewards;  // empty for the initial row
};

struct Rollout {
  std::vector<RolloutStep> steps;  // steps[0] is the reset state
  Score initial_score;
  Score final_score;
  bool success = false;
  int collision_steps = 0;
  bool unstable = false;
};

// Noise-free policy rollout from the environment's current state.
Rollout greedy_rollout(const ActorCritic& agent, Environment& env);

}  // namespace dualreach
