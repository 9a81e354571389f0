#include <gtest/gtest.h>

#include <cmath>

#include "amrl/amr.hpp"
#include "amrl/ddpg.hpp"
#include "amrl/envs.hpp"
#include "test_support.hpp"

namespace amrl {
namespace {

using testing::flat;
using testing::loop_forward;
using testing::max_relative_error;
using testing::numeric_gradient;
using testing::random_vector;

EnvSpec box_spec(std::size_t sd, std::size_t ad, double lo, double hi) {
  return {sd, ad, Vector::Constant(static_cast<Eigen::Index>(ad), lo), Vector::Constant(static_cast<Eigen::Index>(ad), hi),
          100};
}

void zero(Network& net) {
  for (auto& l : net.layers()) {
    l.weights.setZero();
    l.biases.setZero();
  }
}

std::vector<Transition> random_transitions(std::size_t n, std::size_t sd, std::size_t ad, Rng& rng) {
  std::vector<Transition> out;
  std::bernoulli_distribution term(0.2);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({random_vector(sd, rng), random_vector(ad, rng, -2.0, 2.0), random_vector(1, rng, -3.0, 3.0)[0],
                   random_vector(sd, rng), term(rng)});
  return out;
}

std::vector<const Transition*> ptrs(const std::vector<Transition>& ts) {
  std::vector<const Transition*> p;
  for (const auto& t : ts) p.push_back(&t);
  return p;
}

double loop_q(const Network& critic, const Vector& s, const Vector& a) {
  std::vector<double> x(s.data(), s.data() + s.size());
  x.insert(x.end(), a.data(), a.data() + a.size());
  return loop_forward(critic, x)[0];
}

TEST(NoiseSchedule, LinearAnneal) {
  Hyperparams hp;
  EXPECT_EQ(noise_schedule(0, hp), 3.0);
  EXPECT_EQ(noise_schedule(200, hp), 0.0);
  EXPECT_EQ(noise_schedule(100, hp), 1.5);
  EXPECT_EQ(noise_schedule(500, hp), 0.0);
}

TEST(SelectAction, ZeroSigmaIsThePolicyAndDrawsNothing) {
  Rng init(1);
  Agent agent(box_spec(3, 1, -2.0, 2.0), {}, init);
  Rng rng(5);
  const Rng before = rng;
  const Vector s = random_vector(3, init);
  EXPECT_EQ(agent.select_action(s, 0.0, rng), agent.policy(s));
  EXPECT_EQ(rng, before);
}

TEST(SelectAction, ZeroActorGivesRangeCentre) {
  Rng init(1);
  Agent agent(box_spec(2, 2, -1.0, 3.0), {}, init);
  zero(agent.actor());
  EXPECT_EQ(agent.policy(Vector::Ones(2)), Vector::Constant(2, 1.0));
}

TEST(SelectAction, NoisyActionsStayInBounds) {
  Rng init(2);
  Agent agent(box_spec(3, 1, -2.0, 2.0), {}, init);
  for (int i = 0; i < 500; ++i) {
    const double a = agent.select_action(random_vector(3, init), 3.0, init)[0];
    ASSERT_GE(a, -2.0);
    ASSERT_LE(a, 2.0);
  }
}

class TdTarget : public ::testing::Test {
 protected:
  TdTarget() : init_(3), agent_(box_spec(2, 1, -1.0, 1.0), {}, init_) {
    zero(agent_.target_critic());
    agent_.target_critic().layer(1).biases[0] = 2.0;
  }
  Transition t_{Vector::Ones(2), Vector::Zero(1), 1.0, Vector::Ones(2), false};
  Rng init_;
  Agent agent_;
};

TEST_F(TdTarget, BootstrapsFromTargetNetworks) {
  const std::vector<const Transition*> b{&t_};
  EXPECT_DOUBLE_EQ(agent_.td_target(b)[0], 2.8);
}

TEST_F(TdTarget, TerminalDropsBootstrap) {
  t_.reward = 5.0;
  t_.terminal = true;
  const std::vector<const Transition*> b{&t_};
  EXPECT_EQ(agent_.td_target(b)[0], 5.0);
}

TEST(TdTargetGammaZero, EqualsReward) {
  Rng rng(4);
  Hyperparams hp;
  hp.gamma = 0.0;
  Agent agent(box_spec(3, 1, -2.0, 2.0), hp, rng);
  const auto ts = random_transitions(16, 3, 1, rng);
  const Vector y = agent.td_target(ptrs(ts));
  for (std::size_t i = 0; i < ts.size(); ++i) EXPECT_EQ(y[static_cast<Eigen::Index>(i)], ts[i].reward);
}

TEST(CriticUpdate, ZeroResidualLeavesParametersUnchanged) {
  Rng rng(5);
  Hyperparams hp;
  hp.gamma = 0.0;
  hp.optimizer = OptimizerKind::sgd;
  Agent agent(box_spec(3, 1, -2.0, 2.0), hp, rng);
  auto ts = random_transitions(8, 3, 1, rng);
  Batch b = Batch::from(ptrs(ts));
  const Matrix q = forward(agent.critic(), hstack(b.states, b.actions));
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i].reward = q(static_cast<Eigen::Index>(i), 0);
  const Network before = agent.critic();
  EXPECT_EQ(agent.critic_update(ptrs(ts)), 0.0);
  EXPECT_EQ(agent.critic(), before);
}

TEST(CriticUpdate, UnitResidualGivesUnitLoss) {
  Rng rng(6);
  Hyperparams hp;
  hp.gamma = 0.0;
  Agent agent(box_spec(2, 1, -1.0, 1.0), hp, rng);
  zero(agent.critic());
  agent.critic().layer(1).biases[0] = 1.0;
  Transition t{Vector::Ones(2), Vector::Zero(1), 2.0, Vector::Ones(2), false};
  const std::vector<const Transition*> b{&t};
  EXPECT_EQ(agent.critic_update(b), 1.0);
}

TEST(CriticGradient, MatchesFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Agent agent(box_spec(3, 1, -2.0, 2.0), {}, rng);
    const auto ts = random_transitions(32, 3, 1, rng);
    const Batch b = Batch::from(ptrs(ts));
    const Vector y = agent.td_target(b);
    const Network shape = agent.critic();
    auto loss = [&](const std::vector<double>& p) {
      const Network c = unflatten(shape, p);
      double acc = 0.0;
      for (std::size_t i = 0; i < ts.size(); ++i) {
        const double r = y[static_cast<Eigen::Index>(i)] - loop_q(c, ts[i].state, ts[i].action);
        acc += r * r;
      }
      return acc / static_cast<double>(ts.size());
    };
    const auto numeric = numeric_gradient(loss, flatten(shape));
    const auto [value, grads] = agent.critic_gradient(b);
    EXPECT_NEAR(value, loss(flatten(shape)), 1e-12);
    EXPECT_LT(max_relative_error(flat(grads), numeric, 1e-6), 1e-4);
  }
}

TEST(ActorGradient, MatchesFiniteDifferences) {
  Rng rng(8);
  const EnvSpec spec = box_spec(3, 2, -2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    Agent agent(spec, {}, rng);
    const auto ts = random_transitions(32, 3, 2, rng);
    const Batch b = Batch::from(ptrs(ts));
    const Network shape = agent.actor();
    auto objective = [&](const std::vector<double>& p) {
      const Network a = unflatten(shape, p);
      double acc = 0.0;
      for (const auto& t : ts) {
        const auto raw = loop_forward(a, std::vector<double>(t.state.data(), t.state.data() + t.state.size()));
        Vector act(2);
        for (int k = 0; k < 2; ++k) act[k] = 2.0 * raw[static_cast<std::size_t>(k)];
        acc += loop_q(agent.critic(), t.state, act);
      }
      return -acc / static_cast<double>(ts.size());
    };
    const auto numeric = numeric_gradient(objective, flatten(shape));
    EXPECT_LT(max_relative_error(flat(agent.actor_gradient(b)), numeric, 1e-6), 1e-4);
  }
}

TEST(ActorUpdate, CriticBlindToActionLeavesActorUnchanged) {
  Rng rng(9);
  Agent agent(box_spec(3, 1, -2.0, 2.0), {}, rng);
  agent.critic().layer(0).weights.col(3).setZero();
  const auto ts = random_transitions(32, 3, 1, rng);
  const Batch b = Batch::from(ptrs(ts));
  for (double g : flat(agent.actor_gradient(b))) EXPECT_EQ(g, 0.0);
  const Network before = agent.actor();
  agent.actor_update(b);
  EXPECT_EQ(agent.actor(), before);
}

// Q(s, a) = -|a - 1| built from two relu units; the actor starts at a = 0.
TEST(ActorUpdate, AscendsTowardTheCriticMaximum) {
  Rng rng(10);
  Hyperparams hp;
  hp.critic_hidden = 2;
  hp.optimizer = OptimizerKind::sgd;
  hp.actor_lr = 0.1;
  Agent agent(box_spec(1, 1, -2.0, 2.0), hp, rng);
  zero(agent.actor());
  auto& c = agent.critic();
  zero(c);
  c.layer(0).weights(0, 1) = 1.0;
  c.layer(0).biases[0] = -1.0;
  c.layer(0).weights(1, 1) = -1.0;
  c.layer(0).biases[1] = 1.0;
  c.layer(1).weights << -1.0, -1.0;
  const Vector s = Vector::Ones(1);
  EXPECT_EQ(agent.policy(s)[0], 0.0);
  EXPECT_EQ(agent.q_value(s, Vector::Zero(1)), -1.0);
  Transition t{s, Vector::Zero(1), 0.0, s, false};
  const std::vector<const Transition*> b{&t};
  agent.actor_update(b);
  EXPECT_GT(agent.policy(s)[0], 0.0);
  EXPECT_GT(agent.q_value(s, agent.policy(s)), -1.0);
}

TEST(SoftUpdate, TauOneCopies) {
  Rng rng(11);
  Hyperparams hp;
  hp.tau = 1.0;
  Agent agent(box_spec(3, 1, -2.0, 2.0), hp, rng);
  agent.critic() = testing::random_network(4, {{50, Activation::relu}, {1, Activation::linear}}, rng);
  agent.actor() = testing::random_network(3, {{30, Activation::relu}, {1, Activation::tanh}}, rng);
  agent.soft_update();
  EXPECT_EQ(agent.target_critic(), agent.critic());
  EXPECT_EQ(agent.target_actor(), agent.actor());
}

TEST(SoftUpdate, SmallTauStep) {
  Network online = Network::zeros(2, {{3, Activation::relu}, {1, Activation::linear}});
  Network target = online;
  for (auto& l : online.layers()) {
    l.weights.setOnes();
    l.biases.setOnes();
  }
  Agent::blend(target, online, 0.01);
  for (double v : flatten(target)) EXPECT_EQ(v, 0.01);
}

TEST(SoftUpdate, GeometricDecayWithFrozenOnline) {
  Network online = Network::zeros(2, {{3, Activation::relu}, {1, Activation::linear}});
  Network target = online;
  for (auto& l : online.layers()) {
    l.weights.setOnes();
    l.biases.setOnes();
  }
  for (int i = 0; i < 100; ++i) Agent::blend(target, online, 0.01);
  for (double v : flatten(target)) EXPECT_NEAR(1.0 - v, 0.3660323412732292, 1e-12);
}

TEST(RunEpisode, OneStepEpisodeScoresItsReward) {
  Rng rng(12);
  auto env = make_env("unit", {{"reward", 7.0}});
  Agent agent(env->spec(), {}, rng);
  const auto res = run_episode(agent, *env, rng);
  EXPECT_EQ(res.score, 7.0);
  EXPECT_EQ(res.steps, 1u);
  EXPECT_EQ(agent.buffer().size(), 1u);
  EXPECT_EQ(agent.episode(), 1u);
  EXPECT_EQ(agent.learn_steps(), 0u);
}

TEST(RunEpisode, LearnsOncePerStepAfterAFullBatch) {
  Rng rng(13);
  Hyperparams hp;
  hp.batch = 8;
  auto env = make_env("pendulum", {{"max_steps", 20}});
  Agent agent(env->spec(), hp, rng);
  run_episode(agent, *env, rng);
  EXPECT_EQ(agent.learn_steps(), 13u);
}

struct RunTrace {
  std::vector<double> scores;
  std::vector<std::vector<double>> params;
};

RunTrace short_pendulum_run(const Augmenter* amr, std::uint64_t seed) {
  Rng rng(seed);
  Hyperparams hp;
  hp.batch = 8;
  hp.episodes = 4;
  auto env = make_env("pendulum", {{"max_steps", 40}});
  Agent agent(env->spec(), hp, rng);
  RunTrace out;
  for (std::size_t e = 0; e < hp.episodes; ++e) out.scores.push_back(run_episode(agent, *env, amr, rng).score);
  for (const Network* n : {&agent.actor(), &agent.critic(), &agent.target_actor(), &agent.target_critic()})
    out.params.push_back(flatten(*n));
  return out;
}

TEST(RunEpisode, ZeroBetaMatchesNoAugmentationBitForBit) {
  Rng g(14);
  Augmenter amr{AmrNetwork::from_genome(Genome(flatten(
                    testing::random_network(4, {{4, Activation::tanh}, {1, Activation::linear}}, g)))),
                0.0};
  const auto plain = short_pendulum_run(nullptr, 21);
  const auto zero_beta = short_pendulum_run(&amr, 21);
  EXPECT_EQ(plain.scores, zero_beta.scores);
  EXPECT_EQ(plain.params, zero_beta.params);
}

TEST(RunEpisode, SameSeedSameRun) {
  const auto a = short_pendulum_run(nullptr, 33);
  const auto b = short_pendulum_run(nullptr, 33);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(a.scores, short_pendulum_run(nullptr, 34).scores);
}

TEST(RunEpisode, ScoreExcludesAugmentation) {
  Rng rng(15);
  Genome g = Genome::zeros();
  g.genes.back() = 100.0;  // output bias
  Augmenter amr{AmrNetwork::from_genome(g)};
  auto env = make_env("unit");
  Agent agent(env->spec(), {}, rng);
  const auto res = run_episode(agent, *env, &amr, rng);
  EXPECT_EQ(res.score, 1.0);
  EXPECT_EQ(agent.buffer().at(0).reward, 101.0);
}

TEST(Learn, TargetLagIsBounded) {
  Rng rng(16);
  Hyperparams hp;
  hp.batch = 16;
  hp.tau = 0.05;
  auto env = make_env("pendulum");
  Agent agent(env->spec(), hp, rng);
  for (int e = 0; e < 2; ++e) run_episode(agent, *env, rng);
  for (int step = 0; step < 50; ++step) {
    const auto online_before = flatten(agent.critic());
    const auto target_before = flatten(agent.target_critic());
    agent.learn(rng);
    const auto online_after = flatten(agent.critic());
    const auto target_after = flatten(agent.target_critic());
    double lag = 0.0, moved = 0.0, change = 0.0;
    for (std::size_t i = 0; i < online_before.size(); ++i) {
      lag = std::max(lag, std::abs(online_before[i] - target_before[i]));
      moved = std::max(moved, std::abs(online_after[i] - online_before[i]));
      change = std::max(change, std::abs(target_after[i] - target_before[i]));
    }
    ASSERT_LE(change, hp.tau * lag + hp.tau * moved + 1e-15);
  }
}

TEST(Hyperparams, ValidationRejectsBadValues) {
  Hyperparams hp;
  hp.gamma = 1.0;
  EXPECT_THROW(hp.validate(), ContractError);
  hp = {};
  hp.tau = 0.0;
  EXPECT_THROW(hp.validate(), ContractError);
  hp = {};
  hp.batch = 0;
  EXPECT_THROW(hp.validate(), ContractError);
}

}  // namespace
}  // namespace amrl
