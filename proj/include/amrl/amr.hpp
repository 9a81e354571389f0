#pragma once

// Augmented memory replay: a 4-4-1 network that maps features of a fresh
// transition to a scalar A, and the stored reward becomes r + beta * A.
//
// Features, in network input order:
//   0  |r + gamma Q'(s', mu'(s')) - Q(s, a)|   (raw reward, current nets)
//   1  r                                        (raw reward)
//   2  state_entropy(s)
//   3  state_entropy(s')

#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "amrl/ddpg.hpp"
#include "amrl/entropy.hpp"
#include "amrl/error.hpp"
#include "amrl/neural.hpp"

namespace amrl {

inline constexpr std::size_t kAmrInputs = 4;
inline constexpr std::size_t kAmrHidden = 4;
inline constexpr std::size_t kGenomeLength = kAmrInputs * kAmrHidden + kAmrHidden + kAmrHidden + 1;

struct Genome {
  std::vector<double> genes;
  std::optional<double> fitness;

  Genome() = default;
  explicit Genome(std::vector<double> g) : genes(std::move(g)) { validate(); }

  static Genome zeros() { return Genome(std::vector<double>(kGenomeLength, 0.0)); }

  void validate() const {
    require(genes.size() == kGenomeLength, "genome must have ", kGenomeLength, " genes, got ", genes.size());
    for (double g : genes) require(std::isfinite(g), "genome contains a non-finite gene");
  }

  friend bool operator==(const Genome& a, const Genome& b) { return a.genes == b.genes; }
};

struct AmrFeatures {
  double abs_td = 0.0;
  double reward = 0.0;
  double entropy_s = 0.0;
  double entropy_s_next = 0.0;

  Vector as_input() const {
    Vector x(4);
    x << abs_td, reward, entropy_s, entropy_s_next;
    return x;
  }
};

class AmrNetwork {
 public:
  AmrNetwork() : net_(shape()) {}
  explicit AmrNetwork(Network net) : net_(std::move(net)) {
    require(net_.same_shape(shape()), "AMR network must be 4 -> 4 (tanh) -> 1 (linear)");
  }

  static Network shape() { return Network::zeros(kAmrInputs, {{kAmrHidden, Activation::tanh}, {1, Activation::linear}}); }

  static AmrNetwork from_genome(const Genome& g) {
    g.validate();
    return AmrNetwork(unflatten(shape(), g.genes));
  }

  Genome to_genome() const { return Genome(flatten(net_)); }

  const Network& network() const { return net_; }

  double output(const AmrFeatures& f) const { return forward(net_, f.as_input())[0]; }

 private:
  Network net_;
};

inline Network genome_to_network(const Genome& g) { return AmrNetwork::from_genome(g).network(); }
inline Genome network_to_genome(const Network& n) { return AmrNetwork(n).to_genome(); }

inline AmrFeatures features(const Agent& agent, const Transition& t, const EntropyConfig& ecfg = {}) {
  const Vector next_action = agent.policy(agent.target_actor(), Matrix(t.next_state.transpose())).row(0).transpose();
  const double bootstrap = t.terminal ? 0.0 : agent.q_value(agent.target_critic(), t.next_state, next_action);
  const double y = t.reward + agent.hyperparams().gamma * bootstrap;
  AmrFeatures f;
  f.abs_td = std::abs(y - agent.q_value(t.state, t.action));
  f.reward = t.reward;
  f.entropy_s = state_entropy(t.state, ecfg);
  f.entropy_s_next = state_entropy(t.next_state, ecfg);
  return f;
}

// r + beta * A(f); with `bounded`, A is squashed through tanh first.
inline double augment(const AmrNetwork& amr, const AmrFeatures& f, double beta, double r, bool bounded = false) {
  const Vector x = f.as_input();
  if (!x.allFinite()) throw NumericFault("augment: non-finite features");
  double a = amr.output(f);
  if (bounded) a = std::tanh(a);
  const double out = r + beta * a;
  if (!std::isfinite(out)) throw NumericFault("augment: non-finite augmented reward");
  return out;
}

// Plugs an AMR network into run_episode().
struct Augmenter {
  AmrNetwork net;
  double beta = 1.0;
  bool bounded = false;
  EntropyConfig entropy{};

  double augment(const Agent& agent, const Transition& t) const {
    return amrl::augment(net, features(agent, t, entropy), beta, t.reward, bounded);
  }
};

// Text form:
//   amr-genome 1
//   <count>
//   <gene 0>
//   ...
// Genes are written with 17 significant digits so that reading back is exact.
inline void write_genome(std::ostream& os, const Genome& g) {
  g.validate();
  const auto old_prec = os.precision(17);
  os << "amr-genome 1\n" << g.genes.size() << '\n';
  for (double v : g.genes) os << v << '\n';
  os.precision(old_prec);
}

inline Genome read_genome(std::istream& is) {
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(is >> magic >> version) || magic != "amr-genome")
    throw ContractError("genome file: missing 'amr-genome <version>' header");
  require(version == 1, "genome file: unsupported version ", version);
  require(static_cast<bool>(is >> count), "genome file: missing gene count");
  require(count == kGenomeLength, "genome file: expected ", kGenomeLength, " genes, header says ", count);
  std::vector<double> genes(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string tok;
    require(static_cast<bool>(is >> tok), "genome file: truncated after ", i, " genes");
    try {
      std::size_t used = 0;
      genes[i] = std::stod(tok, &used);
      require(used == tok.size(), "genome file: bad gene '", tok, "'");
    } catch (const std::logic_error&) {
      throw ContractError(detail::concat("genome file: bad gene '", tok, "'"));
    }
  }
  std::string extra;
  require(!(is >> extra), "genome file: trailing content '", extra, "'");
  return Genome(std::move(genes));
}

}  // namespace amrl
