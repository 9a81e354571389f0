#pragma once

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "amrl/error.hpp"
#include "amrl/neural.hpp"
#include "amrl/rng.hpp"

namespace amrl {

struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;  // possibly augmented
  Vector next_state;
  bool terminal = false;
};

// Thrown by ReplayBuffer::sample when fewer transitions are stored than requested.
class InsufficientExperience : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fixed-capacity FIFO ring of transitions with uniform minibatch sampling.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t state_dim, std::size_t action_dim)
      : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
    require(capacity > 0, "replay capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  void push(Transition t) {
    require(static_cast<std::size_t>(t.state.size()) == state_dim_ &&
                static_cast<std::size_t>(t.next_state.size()) == state_dim_,
            "transition state length does not match buffer state_dim ", state_dim_);
    require(static_cast<std::size_t>(t.action.size()) == action_dim_,
            "transition action length does not match buffer action_dim ", action_dim_);
    require(t.state.allFinite() && t.next_state.allFinite() && t.action.allFinite() && std::isfinite(t.reward),
            "transition contains non-finite values");
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  // `batch` distinct stored transitions, drawn uniformly without replacement.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    require(batch > 0, "sample: batch must be positive");
    if (storage_.size() < batch)
      throw InsufficientExperience(detail::concat("insufficient experience: ", storage_.size(), " stored, ",
                                                  batch, " requested"));
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t idx : sample_indices(batch, rng)) out.push_back(&storage_[idx]);
    return out;
  }

  // Floyd's algorithm: exactly `batch` rng draws, no rejection loop.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    const std::size_t n = storage_.size();
    std::vector<std::size_t> picked;
    picked.reserve(batch);
    for (std::size_t j = n - batch; j < n; ++j) {
      std::uniform_int_distribution<std::size_t> u(0, j);
      std::size_t k = u(rng);
      if (std::find(picked.begin(), picked.end(), k) != picked.end()) k = j;
      picked.push_back(k);
    }
    return picked;
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return storage_.empty(); }

  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const {
    require(i < storage_.size(), "replay index ", i, " out of range");
    const std::size_t oldest = storage_.size() < capacity_ ? 0 : cursor_;
    return storage_[(oldest + i) % storage_.size()];
  }

  // Debug trace, one transition per line, oldest first:
  //   s=<v,...> a=<v,...> r=<v> s'=<v,...> terminal=<0|1>
  void dump(std::ostream& os) const {
    auto vec = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    };
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& t = at(i);
      os << "s=";
      vec(t.state);
      os << " a=";
      vec(t.action);
      os << " r=" << t.reward << " s'=";
      vec(t.next_state);
      os << " terminal=" << (t.terminal ? 1 : 0) << '\n';
    }
  }

 private:
  std::size_t capacity_;
  std::size_t state_dim_;
  std::size_t action_dim_;
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;
};

}  // namespace amrl
