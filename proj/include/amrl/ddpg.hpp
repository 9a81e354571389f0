#pragma once

// Deep deterministic policy gradient with soft-updated target networks.
//
// Actor:  state -> actor_hidden (relu) -> action_dim (tanh), rescaled to
//         the environment's action box.
// Critic: [state, action] -> critic_hidden (relu) -> 1 (linear).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amrl/envs.hpp"
#include "amrl/error.hpp"
#include "amrl/neural.hpp"
#include "amrl/replay.hpp"
#include "amrl/rng.hpp"

namespace amrl {

struct Hyperparams {
  double gamma = 0.9;
  double tau = 0.01;
  double critic_lr = 0.002;
  double actor_lr = 0.001;
  std::size_t batch = 32;
  std::size_t buffer_capacity = 10000;
  std::size_t max_steps_per_episode = 2000;
  std::size_t episodes = 200;
  double noise_start = 3.0;
  double noise_end = 0.0;
  double beta = 1.0;  // augmentation rate

  std::size_t critic_hidden = 50;
  std::size_t actor_hidden = 30;
  OptimizerKind optimizer = OptimizerKind::adam;
  double grad_clip = 10.0;
  bool amr_bounded = false;  // tanh-squash the augmentation output

  void validate() const {
    require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1), got ", gamma);
    require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1], got ", tau);
    require(critic_lr > 0.0 && std::isfinite(critic_lr), "critic_lr must be positive");
    require(actor_lr > 0.0 && std::isfinite(actor_lr), "actor_lr must be positive");
    require(batch > 0, "batch must be positive");
    require(buffer_capacity > 0, "buffer_capacity must be positive");
    require(buffer_capacity >= batch, "buffer_capacity must be at least batch");
    require(max_steps_per_episode > 0, "max_steps_per_episode must be positive");
    require(episodes > 0, "episodes must be positive");
    require(noise_start >= 0.0 && std::isfinite(noise_start), "noise_start must be >= 0");
    require(noise_end >= 0.0 && std::isfinite(noise_end), "noise_end must be >= 0");
    require(std::isfinite(beta), "beta must be finite");
    require(critic_hidden > 0 && actor_hidden > 0, "hidden widths must be positive");
    require(std::isfinite(grad_clip), "grad_clip must be finite");
  }
};

// Linear anneal from noise_start (episode 0) to noise_end (episode == episodes).
inline double noise_schedule(std::size_t episode, const Hyperparams& hp) {
  const double frac = static_cast<double>(std::min(episode, hp.episodes)) / static_cast<double>(hp.episodes);
  return hp.noise_start + (hp.noise_end - hp.noise_start) * frac;
}

// Column-stacked views of a sampled minibatch.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector not_terminal;  // 0 for terminal transitions, 1 otherwise

  static Batch from(std::span<const Transition* const> ts) {
    require(!ts.empty(), "empty minibatch");
    const auto n = static_cast<Eigen::Index>(ts.size());
    const auto sd = ts.front()->state.size();
    const auto ad = ts.front()->action.size();
    Batch b{Matrix(n, sd), Matrix(n, ad), Vector(n), Matrix(n, sd), Vector(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Transition& t = *ts[static_cast<std::size_t>(i)];
      require(t.state.size() == sd && t.next_state.size() == sd && t.action.size() == ad,
              "minibatch transitions disagree on dimensions");
      b.states.row(i) = t.state.transpose();
      b.actions.row(i) = t.action.transpose();
      b.rewards[i] = t.reward;
      b.next_states.row(i) = t.next_state.transpose();
      b.not_terminal[i] = t.terminal ? 0.0 : 1.0;
    }
    return b;
  }
};

inline Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

class Agent {
 public:
  Agent(const EnvSpec& env, Hyperparams hp, Rng& rng)
      : hp_(hp),
        state_dim_(env.state_dim),
        action_dim_(env.action_dim),
        action_center_((env.action_high + env.action_low) / 2.0),
        action_half_range_((env.action_high - env.action_low) / 2.0),
        action_low_(env.action_low),
        action_high_(env.action_high),
        buffer_(hp.buffer_capacity, env.state_dim, env.action_dim) {
    hp_.validate();
    require((env.action_high.array() > env.action_low.array()).all(), "action bounds must satisfy low < high");
    actor_ = Network::zeros(state_dim_, {{hp_.actor_hidden, Activation::relu}, {action_dim_, Activation::tanh}});
    critic_ = Network::zeros(state_dim_ + action_dim_,
                             {{hp_.critic_hidden, Activation::relu}, {1, Activation::linear}});
    init_fan_in_uniform(actor_, rng);
    init_fan_in_uniform(critic_, rng);
    target_actor_ = actor_;
    target_critic_ = critic_;
    actor_opt_ = OptimizerState(actor_, {hp_.optimizer, hp_.actor_lr, 0.9, 0.999, 1e-8, hp_.grad_clip});
    critic_opt_ = OptimizerState(critic_, {hp_.optimizer, hp_.critic_lr, 0.9, 0.999, 1e-8, hp_.grad_clip});
  }

  const Hyperparams& hyperparams() const { return hp_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }

  const Network& actor() const { return actor_; }
  const Network& critic() const { return critic_; }
  const Network& target_actor() const { return target_actor_; }
  const Network& target_critic() const { return target_critic_; }
  Network& actor() { return actor_; }
  Network& critic() { return critic_; }
  Network& target_actor() { return target_actor_; }
  Network& target_critic() { return target_critic_; }

  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  std::size_t episode() const { return episode_; }
  void set_episode(std::size_t e) { episode_ = e; }
  std::size_t learn_steps() const { return learn_steps_; }

  // Maps raw tanh outputs (rows) into the action box.
  Matrix scale_actions(const Matrix& raw) const {
    Matrix a = raw;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      a.row(i) = (raw.row(i).array() * action_half_range_.transpose().array() + action_center_.transpose().array());
    return a;
  }

  Matrix policy(const Network& actor, const Matrix& states) const { return scale_actions(forward(actor, states)); }

  Vector policy(const Vector& s) const {
    require(static_cast<std::size_t>(s.size()) == state_dim_, "policy: state has ", s.size(),
            " components, expected ", state_dim_);
    Matrix row = s.transpose();
    return policy(actor_, row).row(0).transpose();
  }

  Vector clip(const Vector& a) const { return a.cwiseMax(action_low_).cwiseMin(action_high_); }

  // a = clip(mu(s) + N(0, sigma^2 I)). Draws no noise when sigma == 0.
  Vector select_action(const Vector& s, double sigma, Rng& rng) const {
    Vector a = policy(s);
    if (!a.allFinite()) throw NumericFault("select_action: actor produced a non-finite action");
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += noise(rng);
    }
    return clip(a);
  }

  double q_value(const Network& critic, const Vector& s, const Vector& a) const {
    Vector x(s.size() + a.size());
    x << s, a;
    return forward(critic, x)[0];
  }
  double q_value(const Vector& s, const Vector& a) const { return q_value(critic_, s, a); }

  // y_i = r_i + gamma * Q'(s'_i, mu'(s'_i)), bootstrap dropped on terminal transitions.
  Vector td_target(const Batch& b) const {
    const Matrix next_actions = policy(target_actor_, b.next_states);
    const Matrix q_next = forward(target_critic_, hstack(b.next_states, next_actions));
    return b.rewards + hp_.gamma * b.not_terminal.cwiseProduct(q_next.col(0));
  }
  Vector td_target(std::span<const Transition* const> ts) const { return td_target(Batch::from(ts)); }

  // Gradient of mean (y - Q(s, a))^2 with respect to the critic parameters,
  // targets held fixed. Returns the loss alongside.
  std::pair<double, Gradients> critic_gradient(const Batch& b) const {
    const Vector y = td_target(b);
    ForwardTrace trace;
    const Matrix q = forward(critic_, hstack(b.states, b.actions), &trace);
    const Vector residual = y - q.col(0);
    const double n = static_cast<double>(b.rewards.size());
    const double loss = residual.squaredNorm() / n;
    Matrix upstream = (-2.0 / n) * residual;
    return {loss, backward(critic_, trace, upstream).params};
  }

  // One optimizer step on the critic; returns the loss before the step.
  double critic_update(const Batch& b) {
    auto [loss, grads] = critic_gradient(b);
    if (!std::isfinite(loss)) throw NumericFault("critic_update: non-finite loss");
    apply_update(critic_, std::move(grads), critic_opt_);
    return loss;
  }
  double critic_update(std::span<const Transition* const> ts) { return critic_update(Batch::from(ts)); }

  // Gradient of -(1/S) sum_i Q(s_i, mu(s_i)) with respect to the actor parameters.
  Gradients actor_gradient(const Batch& b) const {
    ForwardTrace actor_trace;
    const Matrix raw = forward(actor_, b.states, &actor_trace);
    ForwardTrace critic_trace;
    forward(critic_, hstack(b.states, scale_actions(raw)), &critic_trace);
    const double n = static_cast<double>(b.states.rows());
    const Matrix upstream = Matrix::Constant(b.states.rows(), 1, -1.0 / n);
    const Matrix input_grad = backward(critic_, critic_trace, upstream).input_grad;
    Matrix action_grad = input_grad.rightCols(static_cast<Eigen::Index>(action_dim_));
    for (Eigen::Index i = 0; i < action_grad.rows(); ++i)
      action_grad.row(i).array() *= action_half_range_.transpose().array();
    return backward(actor_, actor_trace, action_grad).params;
  }

  void actor_update(const Batch& b) {
    Gradients g = actor_gradient(b);
    if (!g.all_finite()) throw NumericFault("actor_update: non-finite policy gradient");
    apply_update(actor_, std::move(g), actor_opt_);
  }
  void actor_update(std::span<const Transition* const> ts) { actor_update(Batch::from(ts)); }

  // target <- tau * online + (1 - tau) * target, both networks.
  void soft_update() {
    blend(target_critic_, critic_, hp_.tau);
    blend(target_actor_, actor_, hp_.tau);
  }

  // critic step, actor step, soft update. Returns the critic loss.
  double learn(Rng& rng) {
    const auto sample = buffer_.sample(hp_.batch, rng);
    const Batch b = Batch::from(sample);
    const double loss = critic_update(b);
    actor_update(b);
    soft_update();
    ++learn_steps_;
    return loss;
  }

  static void blend(Network& target, const Network& online, double tau) {
    for (std::size_t i = 0; i < target.depth(); ++i) {
      auto& t = target.layer(i);
      const auto& o = online.layer(i);
      t.weights = tau * o.weights + (1.0 - tau) * t.weights;
      t.biases = tau * o.biases + (1.0 - tau) * t.biases;
    }
  }

 private:
  Hyperparams hp_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  Vector action_center_;
  Vector action_half_range_;
  Vector action_low_;
  Vector action_high_;
  Network actor_, critic_, target_actor_, target_critic_;
  OptimizerState actor_opt_, critic_opt_;
  ReplayBuffer buffer_;
  std::size_t episode_ = 0;
  std::size_t learn_steps_ = 0;
};

struct EpisodeResult {
  double score = 0.0;  // sum of raw environment rewards
  std::size_t steps = 0;
  double sigma = 0.0;
  double mean_critic_loss = 0.0;  // 0 when no learn step ran
};

// Anything with `double augment(const Agent&, const Transition&) const`
// returning the reward to store.
template <typename A>
concept RewardAugmenter = requires(const A& a, const Agent& agent, const Transition& t) {
  { a.augment(agent, t) } -> std::convertible_to<double>;
};

struct NoAugmentation {
  double augment(const Agent&, const Transition& t) const { return t.reward; }
};

// One episode: act, observe, optionally rewrite the stored reward, store,
// and learn once per step as soon as the buffer holds a full batch.
template <RewardAugmenter Aug = NoAugmentation>
EpisodeResult run_episode(Agent& agent, Environment& env, const Aug* amr, Rng& rng) {
  const auto& hp = agent.hyperparams();
  EpisodeResult res;
  res.sigma = noise_schedule(agent.episode(), hp);
  const std::size_t limit = std::min(hp.max_steps_per_episode, env.spec().max_steps);

  Vector s = env.reset(rng);
  double loss_sum = 0.0;
  std::size_t updates = 0;
  for (std::size_t t = 0; t < limit; ++t) {
    try {
      Vector a = agent.select_action(s, res.sigma, rng);
      StepResult step = env.step(a);
      res.score += step.reward;
      ++res.steps;

      Transition tr{s, std::move(a), step.reward, step.state, step.terminal};
      if (amr) tr.reward = amr->augment(agent, tr);
      agent.buffer().push(std::move(tr));

      if (agent.buffer().size() >= hp.batch) {
        loss_sum += agent.learn(rng);
        ++updates;
      }
      s = std::move(step.state);
      if (step.terminal) break;
    } catch (const NumericFault& e) {
      throw NumericFault(detail::concat("episode ", agent.episode(), " step ", t, ": ", e.what()));
    } catch (const ContractError& e) {
      throw ContractError(detail::concat("episode ", agent.episode(), " step ", t, ": ", e.what()));
    }
  }
  res.mean_critic_loss = updates ? loss_sum / static_cast<double>(updates) : 0.0;
  agent.set_episode(agent.episode() + 1);
  return res;
}

inline EpisodeResult run_episode(Agent& agent, Environment& env, Rng& rng) {
  return run_episode<NoAugmentation>(agent, env, nullptr, rng);
}

}  // namespace amrl
