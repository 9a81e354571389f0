#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "amrl/amr.hpp"
#include "test_support.hpp"

namespace amrl {
namespace {

using testing::random_vector;

EnvSpec spec3() { return {3, 1, Vector::Constant(1, -2.0), Vector::Constant(1, 2.0), 200}; }

void zero(Network& net) {
  for (auto& l : net.layers()) {
    l.weights.setZero();
    l.biases.setZero();
  }
}

Genome random_genome(Rng& rng, double range = 1.0) {
  std::uniform_real_distribution<double> u(-range, range);
  std::vector<double> g(kGenomeLength);
  for (auto& v : g) v = u(rng);
  return Genome(std::move(g));
}

TEST(AmrShape, HasTwentyFiveParameters) {
  EXPECT_EQ(kGenomeLength, 25u);
  EXPECT_EQ(AmrNetwork::shape().parameter_count(), 25u);
}

TEST(Features, ZeroNetworksGiveZeroTdError) {
  Rng rng(1);
  Agent agent(spec3(), {}, rng);
  zero(agent.critic());
  zero(agent.target_critic());
  const Transition t{random_vector(3, rng), Vector::Zero(1), 0.0, random_vector(3, rng), false};
  EXPECT_EQ(features(agent, t).abs_td, 0.0);
}

TEST(Features, ExactCancellation) {
  Rng rng(2);
  Agent agent(spec3(), {}, rng);
  zero(agent.critic());
  agent.critic().layer(1).biases[0] = 1.0;
  zero(agent.target_critic());
  const Transition t{random_vector(3, rng), Vector::Zero(1), 1.0, random_vector(3, rng), false};
  const auto f = features(agent, t);
  EXPECT_EQ(f.abs_td, 0.0);
  EXPECT_EQ(f.reward, 1.0);
}

TEST(Features, TdErrorAgreesWithTdTarget) {
  Rng rng(3);
  std::bernoulli_distribution term(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    Agent agent(spec3(), {}, rng);
    agent.target_critic() = testing::random_network(4, {{50, Activation::relu}, {1, Activation::linear}}, rng);
    agent.target_actor() = testing::random_network(3, {{30, Activation::relu}, {1, Activation::tanh}}, rng);
    const Transition t{random_vector(3, rng), random_vector(1, rng, -2.0, 2.0), random_vector(1, rng, -5.0, 5.0)[0],
                       random_vector(3, rng), term(rng)};
    const std::vector<const Transition*> b{&t};
    const double y = agent.td_target(b)[0];
    const auto f = features(agent, t);
    EXPECT_NEAR(f.abs_td, std::abs(y - agent.q_value(t.state, t.action)), 1e-12);
    EXPECT_GE(f.entropy_s, 0.0);
    EXPECT_LE(f.entropy_s, 1.0);
    EXPECT_EQ(f.entropy_s, state_entropy(t.state));
    EXPECT_EQ(f.entropy_s_next, state_entropy(t.next_state));
  }
}

TEST(Augment, ZeroBetaIsIdentity) {
  Rng rng(4);
  const auto amr = AmrNetwork::from_genome(random_genome(rng));
  for (double r : {-3.25, 0.0, 1.0, 17.5}) EXPECT_EQ(augment(amr, {0.3, r, 0.2, 0.9}, 0.0, r), r);
}

TEST(Augment, ZeroGenomeIsIdentity) {
  const auto amr = AmrNetwork::from_genome(Genome::zeros());
  for (double beta : {0.5, 1.0, 10.0}) EXPECT_EQ(augment(amr, {4.0, -2.0, 0.5, 0.5}, beta, -2.0), -2.0);
}

TEST(Augment, OutputBiasOnly) {
  Genome g = Genome::zeros();
  g.genes.back() = 0.5;
  EXPECT_EQ(augment(AmrNetwork::from_genome(g), {0.7, 1.0, 0.1, 0.2}, 1.0, 1.0), 1.5);
}

TEST(Augment, BetaScalesTheAugmentationLinearly) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto amr = AmrNetwork::from_genome(random_genome(rng));
    const AmrFeatures f{std::abs(random_vector(1, rng, 0.0, 5.0)[0]), random_vector(1, rng, -3.0, 3.0)[0], 0.4, 0.6};
    const double beta = random_vector(1, rng, 0.0, 2.0)[0];
    // Exact when r == 0 since both sides reduce to scaling by a power of two.
    EXPECT_EQ(augment(amr, f, 2.0 * beta, 0.0), 2.0 * augment(amr, f, beta, 0.0));
    const double r = f.reward;
    EXPECT_NEAR(augment(amr, f, 2.0 * beta, r) - r, 2.0 * (augment(amr, f, beta, r) - r), 1e-12);
  }
}

TEST(Augment, BoundedVariantStaysWithinBeta) {
  Genome g = Genome::zeros();
  g.genes.back() = 100.0;
  const auto amr = AmrNetwork::from_genome(g);
  EXPECT_NEAR(augment(amr, {0.0, 0.0, 0.0, 0.0}, 2.0, 1.0, true), 1.0 + 2.0 * std::tanh(100.0), 0.0);
  EXPECT_EQ(augment(amr, {0.0, 0.0, 0.0, 0.0}, 2.0, 1.0, false), 201.0);
}

TEST(Augment, NonFiniteIsANumericFault) {
  const auto amr = AmrNetwork::from_genome(Genome::zeros());
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_THROW(augment(amr, {inf, 0.0, 0.0, 0.0}, 1.0, 0.0), NumericFault);
  Genome g = Genome::zeros();
  g.genes.back() = 1e308;
  EXPECT_THROW(augment(AmrNetwork::from_genome(g), {0.0, 0.0, 0.0, 0.0}, 10.0, 0.0), NumericFault);
}

TEST(Augmenter, TouchesOnlyTheReward) {
  Rng rng(6);
  Agent agent(spec3(), {}, rng);
  Augmenter amr{AmrNetwork::from_genome(random_genome(rng))};
  const Transition t{random_vector(3, rng), random_vector(1, rng), -0.5, random_vector(3, rng), true};
  const double r = amr.augment(agent, t);
  EXPECT_EQ(r, augment(amr.net, features(agent, t), 1.0, -0.5));
}

TEST(GenomeMapping, RoundTrip) {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const Genome g = random_genome(rng, 5.0);
    EXPECT_EQ(network_to_genome(genome_to_network(g)), g);
  }
}

TEST(GenomeMapping, ZeroGenomeOutputsZero) {
  Rng rng(8);
  const Network n = genome_to_network(Genome::zeros());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(forward(n, random_vector(4, rng, -10.0, 10.0))[0], 0.0);
}

// Hidden unit o has all four weights 0.1 (o + 1), no bias; output weights
// [1, -1, 0.5, 2] and output bias 0.25. On input [1, 1, 1, 1]:
//   tanh(0.4) - tanh(0.8) + 0.5 tanh(1.2) + 2 tanh(1.6) + 0.25
TEST(GenomeMapping, HandSetWeights) {
  std::vector<double> g;
  for (int o = 0; o < 4; ++o)
    for (int i = 0; i < 4; ++i) g.push_back(0.1 * (o + 1));
  for (int o = 0; o < 4; ++o) g.push_back(0.0);
  for (double w : {1.0, -1.0, 0.5, 2.0}) g.push_back(w);
  g.push_back(0.25);
  const auto amr = AmrNetwork::from_genome(Genome(g));
  EXPECT_NEAR(amr.output({1.0, 1.0, 1.0, 1.0}), 2.226076604306396, 1e-14);
}

TEST(GenomeMapping, WrongLengthRejected) {
  EXPECT_THROW(Genome(std::vector<double>(24, 0.0)), ContractError);
  EXPECT_THROW(Genome(std::vector<double>(25, std::numeric_limits<double>::quiet_NaN())), ContractError);
  EXPECT_THROW(AmrNetwork(Network::zeros(4, {{5, Activation::tanh}, {1, Activation::linear}})), ContractError);
}

TEST(GenomeFile, RoundTripIsExact) {
  Rng rng(9);
  const Genome g = random_genome(rng, 3.0);
  std::stringstream ss;
  write_genome(ss, g);
  EXPECT_EQ(read_genome(ss), g);
}

TEST(GenomeFile, MalformedFilesRejected) {
  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return read_genome(is);
  };
  std::string ok = "amr-genome 1\n25\n";
  for (int i = 0; i < 25; ++i) ok += "0.5\n";
  EXPECT_NO_THROW(parse(ok));
  EXPECT_THROW(parse("genome 1\n25\n"), ContractError);
  EXPECT_THROW(parse("amr-genome 2\n25\n"), ContractError);
  EXPECT_THROW(parse("amr-genome 1\n24\n"), ContractError);
  EXPECT_THROW(parse("amr-genome 1\n25\n0.1\n"), ContractError);
  EXPECT_THROW(parse(ok + "0.5\n"), ContractError);
  std::string bad = "amr-genome 1\n25\n";
  for (int i = 0; i < 24; ++i) bad += "0.5\n";
  EXPECT_THROW(parse(bad + "x1\n"), ContractError);
  EXPECT_THROW(parse(bad + "nan\n"), ContractError);
}

}  // namespace
}  // namespace amrl
