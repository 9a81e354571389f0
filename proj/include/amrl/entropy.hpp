#pragma once

#include <cmath>

#include "amrl/error.hpp"
#include "amrl/neural.hpp"

namespace amrl {

struct EntropyConfig {
  double epsilon = 1e-8;
  bool normalize = true;
};

// Shannon entropy of p_i = (|s_i| + eps) / sum_j (|s_j| + eps).
// With `normalize` the result is divided by ln(n) and lies in [0, 1].
// An all-zero state smooths to the uniform distribution and maps to 1.
inline double state_entropy(const Vector& s, const EntropyConfig& cfg = {}) {
  require(s.size() >= 2, "state_entropy needs at least 2 components, got ", s.size());
  require(cfg.epsilon > 0.0, "entropy epsilon must be positive");
  require(s.allFinite(), "state_entropy: non-finite state");

  const Eigen::ArrayXd mass = s.array().abs() + cfg.epsilon;
  const Eigen::ArrayXd p = mass / mass.sum();
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  if (!cfg.normalize) return h;
  return std::clamp(h / std::log(static_cast<double>(s.size())), 0.0, 1.0);
}

}  // namespace amrl
