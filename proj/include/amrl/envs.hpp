#pragma once

// Desk-scale continuous-control tasks behind one interface.
//
//   pendulum   state [cos th, sin th, th_dot]   action [torque]      200 steps
//   reacher2d  state [cos q1, sin q1, cos q2, sin q2, w1, w2, dx, dy]
//              action [dw1, dw2]                                       50 steps
//   pointmass  state [px - gx, py - gy, vx, vy] action [fx, fy]       100 steps
//   unit       state [1, 1]  action [a]  reward 1, ends after one step
//
// Rewards are computed from the state before the step is applied and are
// never positive for the three control tasks. Actions are clipped to the
// declared bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "amrl/error.hpp"
#include "amrl/neural.hpp"
#include "amrl/rng.hpp"

namespace amrl {

struct EnvSpec {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  Vector action_low;
  Vector action_high;
  std::size_t max_steps = 0;
};

struct StepResult {
  Vector state;
  double reward = 0.0;
  bool terminal = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(Rng& rng) = 0;

  StepResult step(const Vector& action) {
    const auto& sp = spec();
    require(static_cast<std::size_t>(action.size()) == sp.action_dim, name(), ": action has ", action.size(),
            " components, expected ", sp.action_dim);
    require(action.allFinite(), name(), ": non-finite action");
    Vector a = action.cwiseMax(sp.action_low).cwiseMin(sp.action_high);
    StepResult r = advance(a);
    ++steps_;
    if (steps_ >= sp.max_steps) r.terminal = true;
    return r;
  }

  // Overrides a physical constant; unknown keys and invalid values throw ContractError.
  virtual void set_param(std::string_view key, double value) = 0;
  virtual std::vector<std::string> param_names() const = 0;

  std::size_t steps() const { return steps_; }

 protected:
  virtual StepResult advance(const Vector& clipped_action) = 0;
  void reset_steps() { steps_ = 0; }

  [[noreturn]] void unknown_param(std::string_view key) const {
    throw ContractError(detail::concat(name(), ": unknown parameter '", key, "'"));
  }

 private:
  std::size_t steps_ = 0;
};

inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  return std::remainder(a, 2.0 * pi);
}

namespace detail {

inline void require_positive(std::string_view env, std::string_view key, double v) {
  require(std::isfinite(v) && v > 0.0, env, ": parameter '", key, "' must be positive, got ", v);
}

inline Vector filled(std::size_t n, double v) { return Vector::Constant(static_cast<Eigen::Index>(n), v); }

}  // namespace detail

// Torque-driven swing-up; th = 0 is upright.
// Semi-implicit Euler:
//   th_dot += (3g/(2l) sin th + 3/(m l^2) u) dt, clipped to +-max_speed
//   th     += th_dot dt
// Reward -(th^2 + 0.1 th_dot^2 + 0.001 u^2) with th wrapped to [-pi, pi].
class Pendulum final : public Environment {
 public:
  Pendulum() { rebuild_spec(); }

  std::string_view name() const override { return "pendulum"; }
  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> speed(-1.0, 1.0);
    theta_ = angle(rng);
    theta_dot_ = speed(rng);
    reset_steps();
    return observe();
  }

  void set_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = theta_dot;
  }
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }

  void set_param(std::string_view key, double v) override {
    if (key == "max_steps") {
      detail::require_positive(name(), key, v);
      max_steps_ = static_cast<std::size_t>(v);
    } else if (key == "g") {
      require(std::isfinite(v) && v >= 0.0, "pendulum: g must be >= 0");
      g_ = v;
    } else {
      detail::require_positive(name(), key, v);
      if (key == "m") m_ = v;
      else if (key == "l") l_ = v;
      else if (key == "dt") dt_ = v;
      else if (key == "max_torque") max_torque_ = v;
      else if (key == "max_speed") max_speed_ = v;
      else unknown_param(key);
    }
    rebuild_spec();
  }

  std::vector<std::string> param_names() const override {
    return {"g", "m", "l", "dt", "max_torque", "max_speed", "max_steps"};
  }

 protected:
  StepResult advance(const Vector& a) override {
    const double u = a[0];
    const double th = wrap_angle(theta_);
    const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

    const double accel = 3.0 * g_ / (2.0 * l_) * std::sin(theta_) + 3.0 / (m_ * l_ * l_) * u;
    theta_dot_ = std::clamp(theta_dot_ + accel * dt_, -max_speed_, max_speed_);
    theta_ = wrap_angle(theta_ + theta_dot_ * dt_);
    return {observe(), -cost, false};
  }

 private:
  Vector observe() const {
    Vector s(3);
    s << std::cos(theta_), std::sin(theta_), theta_dot_;
    return s;
  }

  void rebuild_spec() {
    spec_ = {3, 1, detail::filled(1, -max_torque_), detail::filled(1, max_torque_), max_steps_};
  }

  double g_ = 10.0, m_ = 1.0, l_ = 1.0, dt_ = 0.05;
  double max_torque_ = 2.0, max_speed_ = 8.0;
  std::size_t max_steps_ = 200;
  double theta_ = 0.0, theta_dot_ = 0.0;
  EnvSpec spec_;
};

// Kinematic two-link planar arm. Actions increment the joint velocities:
//   w <- clip(damping * w + a, +-max_speed);  q <- q + w dt
// Reward -|tip - target| - 0.01 |a|^2.
class Reacher2D final : public Environment {
 public:
  Reacher2D() { rebuild_spec(); }

  std::string_view name() const override { return "reacher2d"; }
  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    std::uniform_real_distribution<double> radius(0.05, 0.2);
    q1_ = angle(rng);
    q2_ = angle(rng);
    w1_ = w2_ = 0.0;
    const double phi = angle(rng);
    const double r = radius(rng);
    target_x_ = r * std::cos(phi);
    target_y_ = r * std::sin(phi);
    reset_steps();
    return observe();
  }

  void set_state(double q1, double q2, double w1, double w2, double tx, double ty) {
    q1_ = q1, q2_ = q2, w1_ = w1, w2_ = w2, target_x_ = tx, target_y_ = ty;
  }

  std::pair<double, double> target() const { return {target_x_, target_y_}; }

  std::pair<double, double> tip() const {
    return {link1_ * std::cos(q1_) + link2_ * std::cos(q1_ + q2_),
            link1_ * std::sin(q1_) + link2_ * std::sin(q1_ + q2_)};
  }

  void set_param(std::string_view key, double v) override {
    if (key == "damping") {
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "reacher2d: damping must lie in [0, 1]");
      damping_ = v;
    } else {
      detail::require_positive(name(), key, v);
      if (key == "link1") link1_ = v;
      else if (key == "link2") link2_ = v;
      else if (key == "dt") dt_ = v;
      else if (key == "max_speed") max_speed_ = v;
      else if (key == "max_action") max_action_ = v;
      else if (key == "max_steps") max_steps_ = static_cast<std::size_t>(v);
      else unknown_param(key);
    }
    rebuild_spec();
  }

  std::vector<std::string> param_names() const override {
    return {"link1", "link2", "dt", "damping", "max_speed", "max_action", "max_steps"};
  }

 protected:
  StepResult advance(const Vector& a) override {
    const auto [tx, ty] = tip();
    const double reward = -std::hypot(tx - target_x_, ty - target_y_) - 0.01 * a.squaredNorm();
    w1_ = std::clamp(damping_ * w1_ + a[0], -max_speed_, max_speed_);
    w2_ = std::clamp(damping_ * w2_ + a[1], -max_speed_, max_speed_);
    q1_ = wrap_angle(q1_ + w1_ * dt_);
    q2_ = wrap_angle(q2_ + w2_ * dt_);
    return {observe(), reward, false};
  }

 private:
  Vector observe() const {
    const auto [tx, ty] = tip();
    Vector s(8);
    s << std::cos(q1_), std::sin(q1_), std::cos(q2_), std::sin(q2_), w1_, w2_, tx - target_x_, ty - target_y_;
    return s;
  }

  void rebuild_spec() {
    spec_ = {8, 2, detail::filled(2, -max_action_), detail::filled(2, max_action_), max_steps_};
  }

  double link1_ = 0.1, link2_ = 0.11, dt_ = 0.05, damping_ = 0.9;
  double max_speed_ = 5.0, max_action_ = 1.0;
  std::size_t max_steps_ = 50;
  double q1_ = 0, q2_ = 0, w1_ = 0, w2_ = 0, target_x_ = 0, target_y_ = 0;
  EnvSpec spec_;
};

// Planar double integrator in the box [-1, 1]^2 driven towards a random goal:
//   v <- clip(v + a dt, +-max_speed);  p <- clip(p + v dt, +-1)
// Velocity components into a wall are zeroed. The episode ends once the
// mass is within goal_radius of the goal. Reward -|p - g| - 0.01 |a|^2.
class PointMass final : public Environment {
 public:
  PointMass() { rebuild_spec(); }

  std::string_view name() const override { return "pointmass"; }
  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng& rng) override {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    pos_ = Eigen::Vector2d(u(rng), u(rng));
    goal_ = Eigen::Vector2d(u(rng), u(rng));
    vel_.setZero();
    reset_steps();
    return observe();
  }

  void set_state(const Eigen::Vector2d& pos, const Eigen::Vector2d& vel, const Eigen::Vector2d& goal) {
    pos_ = pos, vel_ = vel, goal_ = goal;
  }

  void set_param(std::string_view key, double v) override {
    detail::require_positive(name(), key, v);
    if (key == "dt") dt_ = v;
    else if (key == "max_speed") max_speed_ = v;
    else if (key == "max_force") max_force_ = v;
    else if (key == "goal_radius") goal_radius_ = v;
    else if (key == "max_steps") max_steps_ = static_cast<std::size_t>(v);
    else unknown_param(key);
    rebuild_spec();
  }

  std::vector<std::string> param_names() const override {
    return {"dt", "max_speed", "max_force", "goal_radius", "max_steps"};
  }

 protected:
  StepResult advance(const Vector& a) override {
    const double reward = -(pos_ - goal_).norm() - 0.01 * a.squaredNorm();
    for (int i = 0; i < 2; ++i) {
      vel_[i] = std::clamp(vel_[i] + a[i] * dt_, -max_speed_, max_speed_);
      const double p = pos_[i] + vel_[i] * dt_;
      pos_[i] = std::clamp(p, -1.0, 1.0);
      if (p != pos_[i]) vel_[i] = 0.0;
    }
    return {observe(), reward, (pos_ - goal_).norm() < goal_radius_};
  }

 private:
  Vector observe() const {
    Vector s(4);
    s << pos_[0] - goal_[0], pos_[1] - goal_[1], vel_[0], vel_[1];
    return s;
  }

  void rebuild_spec() {
    spec_ = {4, 2, detail::filled(2, -max_force_), detail::filled(2, max_force_), max_steps_};
  }

  double dt_ = 0.1, max_speed_ = 1.0, max_force_ = 1.0, goal_radius_ = 0.05;
  std::size_t max_steps_ = 100;
  Eigen::Vector2d pos_ = Eigen::Vector2d::Zero(), vel_ = Eigen::Vector2d::Zero(), goal_ = Eigen::Vector2d::Zero();
  EnvSpec spec_;
};

// Degenerate task for plumbing tests: constant reward (default 1), terminal
// after max_steps (default 1).
class UnitReward final : public Environment {
 public:
  UnitReward() { rebuild_spec(); }

  std::string_view name() const override { return "unit"; }
  const EnvSpec& spec() const override { return spec_; }

  Vector reset(Rng&) override {
    reset_steps();
    return Vector::Ones(2);
  }

  void set_param(std::string_view key, double v) override {
    if (key == "reward") {
      require(std::isfinite(v), "unit: reward must be finite");
      reward_ = v;
      return;
    }
    if (key != "max_steps") unknown_param(key);
    detail::require_positive(name(), key, v);
    max_steps_ = static_cast<std::size_t>(v);
    rebuild_spec();
  }

  std::vector<std::string> param_names() const override { return {"reward", "max_steps"}; }

 protected:
  StepResult advance(const Vector&) override { return {Vector::Ones(2), reward_, false}; }

 private:
  void rebuild_spec() { spec_ = {2, 1, detail::filled(1, -1.0), detail::filled(1, 1.0), max_steps_}; }

  std::size_t max_steps_ = 1;
  double reward_ = 1.0;
  EnvSpec spec_;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;
using EnvParams = std::map<std::string, double>;

inline std::vector<std::string> env_names() { return {"pendulum", "reacher2d", "pointmass", "unit"}; }

inline std::unique_ptr<Environment> make_env(std::string_view name, const EnvParams& params = {}) {
  std::unique_ptr<Environment> env;
  if (name == "pendulum") env = std::make_unique<Pendulum>();
  else if (name == "reacher2d") env = std::make_unique<Reacher2D>();
  else if (name == "pointmass") env = std::make_unique<PointMass>();
  else if (name == "unit") env = std::make_unique<UnitReward>();
  else throw ContractError(detail::concat("unknown environment '", name, "'"));
  for (const auto& [k, v] : params) env->set_param(k, v);
  return env;
}

// Validates eagerly so a bad name or parameter fails before any run starts.
inline EnvFactory env_factory(std::string name, EnvParams params = {}) {
  make_env(name, params);
  return [name = std::move(name), params = std::move(params)] { return make_env(name, params); };
}

}  // namespace amrl
