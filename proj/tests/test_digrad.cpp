#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dualreach/config.hpp"
#include "dualreach/digrad.hpp"

using namespace dualreach;
using nn::Matrix;

namespace {

AgentConfig small_config(bool batchnorm, double keep = 1.0) {
  AgentConfig c;
  c.actor.hidden = {6, 5};
  c.critic.hidden = {7, 4};
  c.actor.batchnorm = c.critic.batchnorm = batchnorm;
  c.actor.keep_prob = c.critic.keep_prob = keep;
  return c;
}

// Two arms of two joints each sharing joint 0.
ActionPartition shared_torso() { return ActionPartition::make(5, {{0, 1, 2}, {0, 3, 4}}, {0}); }

Batch random_batch(int s, int a, int k, int b, Rng& rng) {
  std::normal_distribution<double> n;
  Batch batch;
  auto fill = [&](Matrix& m, int rows) {
    m.resize(rows, b);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  };
  fill(batch.states, s);
  fill(batch.actions, a);
  fill(batch.next_states, s);
  fill(batch.rewards, k);
  batch.done = Eigen::VectorXd::Zero(b);
  for (int c = 0; c < b; c += 3) batch.done[c] = 1.0;
  return batch;
}

// Warm batch-norm running statistics so eval mode is not the identity.
void warm(ActorCritic& ac, const Batch& batch, Rng& rng) {
  for (int i = 0; i < 3; ++i) {
    ac.actor.forward(batch.states, nn::Mode::kTrain, &rng);
    ac.critic_loss_and_grad(batch, batch.rewards, 0.0, nn::Mode::kTrain, &rng);
  }
}

std::vector<double> grads(nn::Network& net) {
  std::vector<double> out;
  for (auto& p : net.parameters()) out.insert(out.end(), p.grad.begin(), p.grad.end());
  return out;
}

// Objective whose parameter gradient is the shared-slot-averaged update:
// shared slots see only 1/k of the actor's perturbation.
double averaged_objective(ActorCritic& ac, const Matrix& states, const Matrix& base, nn::Mode mode,
                          nn::Rng& rng) {
  const Matrix a = ac.action_bound() * ac.actor.forward(states, mode, &rng);
  Matrix mixed = a;
  const double k = ac.num_tasks();
  for (int j : ac.partition().shared) mixed.row(j) = base.row(j) + (a.row(j) - base.row(j)) / k;
  double j = 0.0;
  for (int i = 0; i < ac.num_tasks(); ++i) j += ac.q_values(states, mixed, i).sum();
  return j / static_cast<double>(states.cols());
}

double state_distance(const nn::Network& a, const nn::Network& b) {
  const auto x = a.state_arrays();
  const auto y = b.state_arrays();
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j) d = std::max(d, std::abs(x[i][j] - y[i][j]));
  return d;
}

}  // namespace

TEST(Partition, SharedAndExclusiveSlots) {
  const auto p = shared_torso();
  EXPECT_EQ(p.num_tasks(), 2);
  EXPECT_EQ(p.shared, std::vector<int>{0});
  EXPECT_EQ(p.exclusive[0], (std::vector<int>{1, 2}));
  EXPECT_EQ(p.exclusive[1], (std::vector<int>{3, 4}));

  Matrix a = Matrix::Constant(5, 2, 1.0);
  const Matrix m = p.mask(a, 1);
  EXPECT_EQ(m.col(0), (Eigen::VectorXd(5) << 1, 0, 0, 1, 1).finished());

  Eigen::VectorXd v(5);
  v << 10, 11, 12, 13, 14;
  EXPECT_EQ(gather(v, p.task_slots[1]), (Eigen::VectorXd(3) << 10, 13, 14).finished());

  EXPECT_THROW(ActionPartition::make(3, {{0, 1}, {1, 2}}, {}), std::invalid_argument);
  EXPECT_THROW(ActionPartition::make(3, {{0, 1}, {2}}, {0}), std::invalid_argument);
  EXPECT_THROW(ActionPartition::make(3, {{0, 3}}, {}), std::invalid_argument);
}

TEST(Partition, FromPlanarModel) {
  const auto p = ActionPartition::from_model(planar_dual_arm());
  EXPECT_EQ(p.num_tasks(), 2);
  EXPECT_FALSE(p.shared.empty());
  for (const auto& ex : p.exclusive) EXPECT_FALSE(ex.empty());
}

TEST(ActorCritic, ActionsAreBounded) {
  Rng rng(1);
  ActorCritic ac(7, shared_torso(), 0.5, small_config(true, 0.8), rng);
  const Matrix s = 50.0 * Matrix::Random(7, 30);
  const Matrix a = ac.act(s);
  EXPECT_LE(a.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_TRUE(ac.act(Eigen::VectorXd(s.col(3))).isApprox(a.col(3), 1e-12));
  EXPECT_LE(ac.target_act(s).cwiseAbs().maxCoeff(), 0.5);
}

TEST(ActorCritic, CriticHeadIgnoresOtherTasksSlots) {
  Rng rng(2);
  ActorCritic ac(7, shared_torso(), 1.0, small_config(true), rng);
  const Matrix s = Matrix::Random(7, 4);
  Matrix a = Matrix::Random(5, 4);
  const auto q0 = ac.q_values(s, a, 0);
  const auto q1 = ac.q_values(s, a, 1);
  Matrix b = a;
  b.row(3).setConstant(9.0);  // task 1 only
  b.row(4).setConstant(-9.0);
  EXPECT_EQ(ac.q_values(s, b, 0), q0);
  EXPECT_NE(ac.q_values(s, b, 1), q1);

  const Matrix in = ac.critic_input(s, a, 1);
  ASSERT_EQ(in.rows(), 7 + 5 + 2);
  EXPECT_EQ(in.row(7 + 1).cwiseAbs().sum(), 0.0);
  EXPECT_EQ(in.row(12).sum(), 0.0);
  EXPECT_EQ(in.row(13).sum(), 4.0);
}

TEST(Targets, MatchHandComputedBellmanBackup) {
  Rng rng(3);
  ActorCritic ac(6, shared_torso(), 1.0, small_config(true), rng);
  Batch b = random_batch(6, 5, 2, 9, rng);
  warm(ac, b, rng);
  ac.soft_update(0.3);

  const Matrix y = ac.compute_targets(b, 0.9);
  const Matrix a_next = ac.target_act(b.next_states);
  for (int i = 0; i < 2; ++i) {
    const Matrix q = ac.target_critic.predict(ac.critic_input(b.next_states, a_next, i));
    for (int c = 0; c < 9; ++c) {
      const double expect = b.rewards(i, c) + 0.9 * (1.0 - b.done[c]) * q(i, c);
      EXPECT_NEAR(y(i, c), expect, 1e-12);
    }
  }
  EXPECT_EQ(ac.compute_targets(b, 0.0), b.rewards);
  b.done.setOnes();
  EXPECT_EQ(ac.compute_targets(b, 0.99), b.rewards);
}

TEST(Gradients, CriticLossMatchesFiniteDifferences) {
  for (int seed = 0; seed < 6; ++seed) {
    Rng rng(seed);
    ActorCritic ac(6, shared_torso(), 1.0, small_config(true), rng);
    const Batch b = random_batch(6, 5, 2, 8, rng);
    warm(ac, b, rng);
    const Matrix y = Matrix::Random(2, 8);
    for (auto mode : {nn::Mode::kEval, nn::Mode::kTrain}) {
      ac.critic_loss_and_grad(b, y, 0.01, mode, &rng);
      const auto analytic = grads(ac.critic);
      std::size_t n = 0;
      double worst = 0.0;
      const double h = 1e-5;
      for (auto& p : ac.critic.parameters()) {
        for (std::size_t i = 0; i < p.value.size(); ++i, ++n) {
          const double saved = p.value[i];
          p.value[i] = saved + h;
          const double up = ac.critic_loss_and_grad(b, y, 0.01, mode, &rng);
          p.value[i] = saved - h;
          const double down = ac.critic_loss_and_grad(b, y, 0.01, mode, &rng);
          p.value[i] = saved;
          worst = std::max(worst, nn::relative_error(analytic[n], (up - down) / (2 * h)));
        }
      }
      EXPECT_LT(worst, 1e-4) << "seed " << seed;
    }
  }
}

TEST(Gradients, ActorUpdateMatchesFiniteDifferences) {
  for (int seed = 0; seed < 6; ++seed) {
    for (bool shared : {true, false}) {
      for (auto mode : {nn::Mode::kEval, nn::Mode::kTrain}) {
        Rng rng(100 + seed);
        ActorCritic ac(6, shared_torso(), 0.7, small_config(true), rng);
        const Batch b = random_batch(6, 5, 2, 8, rng);
        warm(ac, b, rng);
        ac.actor_gradient(b.states, shared, mode, &rng);
        const auto analytic = grads(ac.actor);
        const Matrix base = ac.action_bound() * ac.actor.forward(b.states, mode, &rng);
        auto objective = [&] {
          if (shared) return averaged_objective(ac, b.states, base, mode, rng);
          const Matrix a = ac.action_bound() * ac.actor.forward(b.states, mode, &rng);
          double j = 0.0;
          for (int i = 0; i < 2; ++i) j += ac.q_values(b.states, a, i).sum();
          return j / 8.0;
        };
        std::size_t n = 0;
        double worst = 0.0;
        const double h = 1e-5;
        for (auto& p : ac.actor.parameters()) {
          for (std::size_t i = 0; i < p.value.size(); ++i, ++n) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double up = objective();
            p.value[i] = saved - h;
            const double down = objective();
            p.value[i] = saved;
            // The stored gradient descends -J.
            worst = std::max(worst, nn::relative_error(analytic[n], -(up - down) / (2 * h)));
          }
        }
        EXPECT_LT(worst, 1e-4) << "seed " << seed << " shared " << shared;
      }
    }
  }
}

TEST(Gradients, ReducesToSingleTaskUpdate) {
  for (int seed = 0; seed < 10; ++seed) {
    for (const auto& part : {ActionPartition::make(4, {{0, 1, 2, 3}}, {0, 1}),
                             ActionPartition::make(4, {{0, 1}, {2, 3}}, {})}) {
      Rng rng(seed);
      ActorCritic ac(5, part, 1.0, small_config(true), rng);
      const Batch b = random_batch(5, 4, part.num_tasks(), 6, rng);
      warm(ac, b, rng);
      const Matrix a = ac.act(b.states);
      const Matrix g_avg = ac.action_gradient(b.states, a, true);
      const Matrix g_sum = ac.action_gradient(b.states, a, false);
      EXPECT_LT((g_avg - g_sum).cwiseAbs().maxCoeff(), 1e-12);

      ac.actor_gradient(b.states, true, nn::Mode::kEval, nullptr);
      const auto u1 = grads(ac.actor);
      ac.actor_gradient(b.states, false, nn::Mode::kEval, nullptr);
      const auto u2 = grads(ac.actor);
      for (std::size_t i = 0; i < u1.size(); ++i) EXPECT_LT(std::abs(u1[i] - u2[i]), 1e-12);
    }
  }
}

TEST(Gradients, SharedSlotsAverageTaskGradients) {
  Rng rng(5);
  ActorCritic ac(6, shared_torso(), 1.0, small_config(false), rng);
  const Matrix s = Matrix::Random(6, 3);
  const Matrix a = Matrix::Random(5, 3);
  const Matrix avg = ac.action_gradient(s, a, true);
  const Matrix sum = ac.action_gradient(s, a, false);
  EXPECT_LT((avg.row(0) - 0.5 * sum.row(0)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(avg.bottomRows(4), sum.bottomRows(4));
}

TEST(Training, CriticLossDecreasesOnFixedBatch) {
  Rng rng(6);
  AgentConfig c = small_config(false);
  c.critic_lr = 1e-3;
  ActorCritic ac(6, shared_torso(), 1.0, c, rng);
  const Batch b = random_batch(6, 5, 2, 16, rng);
  const Matrix y = Matrix::Random(2, 16);
  const double before = ac.critic_loss_and_grad(b, y, 0.0, nn::Mode::kEval, nullptr);
  for (int i = 0; i < 300; ++i) ac.critic_update(b, y, 0.0, rng);
  const double after = ac.critic_loss_and_grad(b, y, 0.0, nn::Mode::kEval, nullptr);
  EXPECT_LT(after, 0.5 * before);
}

TEST(Training, ActorStepAscendsCriticObjective) {
  Rng rng(7);
  AgentConfig c = small_config(false);
  c.actor_lr = 1e-5;
  ActorCritic ac(6, shared_torso(), 1.0, c, rng);
  const Matrix s = Matrix::Random(6, 32);
  const double before = ac.actor_gradient(s, false, nn::Mode::kEval, nullptr);
  ac.actor_update(s, false, rng);
  const double after = ac.actor_gradient(s, false, nn::Mode::kEval, nullptr);
  EXPECT_GT(after, before);
}

TEST(SoftUpdate, BlendsEveryStateArray) {
  Rng rng(8);
  ActorCritic ac(6, shared_torso(), 1.0, small_config(true), rng);
  const Batch b = random_batch(6, 5, 2, 8, rng);
  for (int i = 0; i < 5; ++i) {
    ac.critic_update(b, b.rewards, 0.01, rng);
    ac.actor_update(b.states, true, rng);
  }
  ASSERT_GT(state_distance(ac.actor, ac.target_actor), 0.0);

  const nn::Network t0 = ac.target_actor;
  ac.soft_update(0.0);
  EXPECT_EQ(state_distance(ac.target_actor, t0), 0.0);
  ac.soft_update(1.0, TargetUpdate::kAsPrinted);
  EXPECT_EQ(state_distance(ac.target_actor, t0), 0.0);

  ac.soft_update(0.5);
  const auto mid = ac.target_actor.state_arrays();
  const auto on = ac.actor.state_arrays();
  const auto old = t0.state_arrays();
  for (std::size_t i = 0; i < mid.size(); ++i)
    for (std::size_t j = 0; j < mid[i].size(); ++j)
      EXPECT_NEAR(mid[i][j], 0.5 * (on[i][j] + old[i][j]), 1e-15);

  ac.soft_update(1.0);
  EXPECT_EQ(state_distance(ac.target_actor, ac.actor), 0.0);
  EXPECT_EQ(state_distance(ac.target_critic, ac.critic), 0.0);
}

TEST(SoftUpdate, ConvergesGeometrically) {
  Rng rng(9);
  ActorCritic ac(6, shared_torso(), 1.0, small_config(true), rng);
  const Batch b = random_batch(6, 5, 2, 8, rng);
  ac.critic_update(b, b.rewards, 0.0, rng);
  const double d0 = state_distance(ac.critic, ac.target_critic);
  for (int i = 0; i < 100; ++i) ac.soft_update(0.05);
  EXPECT_NEAR(state_distance(ac.critic, ac.target_critic), d0 * std::pow(0.95, 100), 1e-12);
}

TEST(Noise, ScheduleAndSpread) {
  NoiseSchedule n{0.3, 0.99, 0.05};
  EXPECT_EQ(n.sigma(0), 0.3);
  double last = n.sigma(0);
  for (int e = 1; e < 500; ++e) {
    EXPECT_LE(n.sigma(e), last);
    EXPECT_GE(n.sigma(e), 0.05);
    last = n.sigma(e);
  }
  EXPECT_EQ(n.sigma(1000), 0.05);

  Rng rng(10);
  const int count = 20000;
  double ss = 0.0;
  for (int i = 0; i < count; ++i) ss += exploration_noise(n, 10, 5, rng).squaredNorm();
  const double sd = std::sqrt(ss / (5.0 * count));
  EXPECT_NEAR(sd, n.sigma(10), 0.02 * n.sigma(10));
}

TEST(Replay, FifoEviction) {
  ReplayBuffer buf(3);
  Rng rng(1);
  EXPECT_THROW(buf.sample(1, rng), std::logic_error);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.state = Eigen::VectorXd::Constant(1, i);
    t.action = t.next_state = t.state;
    t.rewards = Eigen::VectorXd::Zero(2);
    buf.push(t);
  }
  ASSERT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.at(0).state[0], 2);
  EXPECT_EQ(buf.at(2).state[0], 4);
  EXPECT_THROW(buf.sample(4, rng), std::invalid_argument);
  const auto idx = buf.sample_indices(3, rng);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 3u);
}

TEST(Replay, SingleItemAndBatchLayout) {
  ReplayBuffer buf(10);
  Transition t;
  t.state = Eigen::VectorXd::Constant(3, 1.5);
  t.action = Eigen::VectorXd::Constant(2, -1.0);
  t.next_state = Eigen::VectorXd::Constant(3, 2.5);
  t.rewards = (Eigen::VectorXd(2) << 4, 5).finished();
  t.done = true;
  buf.push(t);
  Rng rng(2);
  const Batch b = buf.sample(1, rng);
  EXPECT_EQ(b.size(), 1);
  EXPECT_EQ(b.states.col(0), t.state);
  EXPECT_EQ(b.rewards.col(0), t.rewards);
  EXPECT_EQ(b.done[0], 1.0);
}

TEST(Replay, UniformSampling) {
  const int n = 10;
  ReplayBuffer buf(n);
  for (int i = 0; i < 2 * n; ++i) {
    Transition t;
    t.state = t.action = t.next_state = Eigen::VectorXd::Zero(1);
    t.rewards = Eigen::VectorXd::Zero(1);
    buf.push(t);
  }
  Rng rng(3);
  std::vector<double> hits(n, 0.0);
  const int draws = 20000;
  for (int d = 0; d < draws; ++d)
    for (auto i : buf.sample_indices(3, rng)) hits[i] += 1;
  const double expect = 3.0 * draws / n;
  double chi2 = 0.0;
  for (double h : hits) chi2 += (h - expect) * (h - expect) / expect;
  EXPECT_LT(chi2, 27.88);  // 9 dof, p = 0.001
}

TEST(Train, ZeroEpisodesAndDeterminism) {
  EnvConfig ec = planar_env_config();
  ec.max_steps = 15;
  TrainConfig tc = default_train_config(ec.action_bound);
  tc.agent = small_config(true, 0.8);
  tc.batch_size = 8;
  tc.max_steps = 15;
  tc.max_episodes = 0;
  Environment env(planar_dual_arm(), ec);
  Rng rng(1);
  EXPECT_TRUE(train(env, tc, rng).log.empty());

  tc.max_episodes = 4;
  Rng r1(5), r2(5);
  const auto a = train(env, tc, r1);
  const auto b = train(env, tc, r2);
  ASSERT_EQ(a.log.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.log[i].score, b.log[i].score);
    EXPECT_EQ(a.log[i].errors, b.log[i].errors);
    EXPECT_EQ(a.log[i].steps, b.log[i].steps);
  }
  EXPECT_EQ(state_distance(a.agent.actor, b.agent.actor), 0.0);
}

TEST(Checkpoint, RoundTrip) {
  Rng rng(11);
  ActorCritic ac(6, shared_torso(), 0.8, small_config(true, 0.8), rng);
  const Batch b = random_batch(6, 5, 2, 8, rng);
  for (int i = 0; i < 3; ++i) {
    ac.critic_update(b, b.rewards, 0.01, rng);
    ac.actor_update(b.states, true, rng);
    ac.soft_update(0.1);
  }
  std::ostringstream rs;
  rs << rng;
  const auto path = std::filesystem::temp_directory_path() / "dualreach_ckpt_test.bin";
  save_checkpoint(path, ac, rs.str());
  std::string rng_state;
  const ActorCritic back = load_checkpoint(path, &rng_state);
  std::filesystem::remove(path);

  EXPECT_EQ(rng_state, rs.str());
  EXPECT_EQ(back.state_dim(), 6);
  EXPECT_EQ(back.action_bound(), 0.8);
  EXPECT_EQ(back.partition().task_slots, ac.partition().task_slots);
  EXPECT_EQ(back.partition().shared, ac.partition().shared);
  EXPECT_EQ(state_distance(back.actor, ac.actor), 0.0);
  EXPECT_EQ(state_distance(back.critic, ac.critic), 0.0);
  EXPECT_EQ(state_distance(back.target_actor, ac.target_actor), 0.0);
  EXPECT_EQ(state_distance(back.target_critic, ac.target_critic), 0.0);
  EXPECT_EQ(back.actor_opt.step, ac.actor_opt.step);
  for (std::size_t i = 0; i < ac.critic_opt.m.size(); ++i) {
    EXPECT_EQ(back.critic_opt.m[i], ac.critic_opt.m[i]);
    EXPECT_EQ(back.critic_opt.v[i], ac.critic_opt.v[i]);
  }
  EXPECT_EQ(back.act(b.states), ac.act(b.states));

  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto path = std::filesystem::temp_directory_path() / "dualreach_ckpt_garbage.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(Config, TrainSectionOverrides) {
  const auto cfg = Config::parse(R"(
[train]
actor_hidden = 32 16
critic_keep_prob = 0.9
target_update = as-printed
batch_size = 16
shared_update = false
)");
  const auto tc = train_config_from(cfg, 1.0);
  EXPECT_EQ(tc.agent.actor.hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(tc.agent.critic.keep_prob, 0.9);
  EXPECT_EQ(tc.agent.actor.keep_prob, 0.8);
  EXPECT_EQ(tc.target_update, TargetUpdate::kAsPrinted);
  EXPECT_EQ(tc.batch_size, 16);
  EXPECT_FALSE(tc.shared_update);
  EXPECT_EQ(default_train_config(2.0).noise.sigma0, 0.6);
  EXPECT_ANY_THROW(train_config_from(Config::parse("[train]\ngamma = 1.5\n"), 1.0));
}
