#pragma once

// Generational GA over AMR genomes.
//
// Every generation is evaluated on a shared seed set
//   generation_seed = derive_seed({master, generation})
//   seed_k          = derive_seed({generation_seed, k}),  k < seeds_per_genome
// so that genomes in one generation face identical learner initialisations
// and environment draws. The top `elite` genomes are copied unchanged; the
// remaining slots are filled with mutate(crossover(select_parents())).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "amrl/amr.hpp"
#include "amrl/ddpg.hpp"
#include "amrl/envs.hpp"
#include "amrl/error.hpp"
#include "amrl/rng.hpp"

namespace amrl {

inline constexpr double kFaultFitness = -std::numeric_limits<double>::infinity();

struct GaConfig {
  std::size_t population = 10;
  std::size_t elite = 5;
  std::size_t generations = 75;
  double mutation_rate = 0.25;
  double mutation_range = 0.1;
  std::size_t episodes_per_eval = 200;
  std::size_t seeds_per_genome = 1;
  double init_range = 1.0;        // generation 0 genes ~ U(-init_range, init_range)
  bool matched_baseline = false;  // also run AMR-free learners on each generation's seeds
  std::size_t workers = 1;

  void validate() const {
    require(population > 0, "population must be positive");
    require(elite > 0 && elite <= population, "elite must lie in [1, population]");
    require(elite == population || elite >= 2, "elite must be >= 2 when offspring are bred");
    require(generations > 0, "generations must be positive");
    require(mutation_rate >= 0.0 && mutation_rate <= 1.0, "mutation_rate must lie in [0, 1]");
    require(mutation_range > 0.0 && std::isfinite(mutation_range), "mutation_range must be positive");
    require(episodes_per_eval > 0, "episodes_per_eval must be positive");
    require(seeds_per_genome > 0, "seeds_per_genome must be positive");
    require(init_range > 0.0 && std::isfinite(init_range), "init_range must be positive");
    require(workers > 0, "workers must be positive");
  }
};

struct Individual {
  Genome genome;
  double fitness = kFaultFitness;
  std::uint64_t eval_seed = 0;
};

struct EvalRecord {
  std::size_t generation = 0;
  std::size_t individual = 0;
  std::uint64_t seed = 0;  // generation seed
  double fitness = kFaultFitness;
  std::vector<double> episode_scores;  // seed-major
};

struct Evaluation {
  double fitness = kFaultFitness;
  std::vector<double> episode_scores;
};

// ---------------------------------------------------------------------------
// Fitness of one learner run.

// Fresh agent seeded from `seed`, hp.episodes episodes, AMR active when
// `genome` is non-null. Fitness is the sum of raw episode scores; a numeric
// fault anywhere in the run yields kFaultFitness.
inline Evaluation evaluate_run(const Genome* genome, const EnvFactory& make, const Hyperparams& hp,
                               std::uint64_t seed) {
  Evaluation ev;
  Rng rng(seed);
  auto env = make();
  Agent agent(env->spec(), hp, rng);
  std::optional<Augmenter> amr;
  if (genome) amr = Augmenter{AmrNetwork::from_genome(*genome), hp.beta, hp.amr_bounded, {}};
  try {
    double total = 0.0;
    for (std::size_t e = 0; e < hp.episodes; ++e) {
      const auto res = amr ? run_episode(agent, *env, &*amr, rng) : run_episode(agent, *env, rng);
      ev.episode_scores.push_back(res.score);
      total += res.score;
    }
    ev.fitness = total;
  } catch (const NumericFault&) {
    ev.fitness = kFaultFitness;
  }
  return ev;
}

inline double evaluate(const Genome& genome, const EnvFactory& make, const Hyperparams& hp, std::uint64_t seed) {
  return evaluate_run(&genome, make, hp, seed).fitness;
}

// ---------------------------------------------------------------------------
// Variation operators.

// Descending fitness, ties by position; NaN counts as a fault.
inline std::vector<std::size_t> rank_order(const std::vector<Individual>& pop) {
  std::vector<std::size_t> idx(pop.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto key = [&](std::size_t i) { return std::isnan(pop[i].fitness) ? kFaultFitness : pop[i].fitness; };
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  return idx;
}

// Selection weights of the top `elite` in rank order: rank r (1-based) gets
// elite + 1 - r, and members with equal fitness share their group's mean weight.
inline std::vector<double> rank_weights(const std::vector<Individual>& pop, const std::vector<std::size_t>& order,
                                        std::size_t elite) {
  std::vector<double> w(elite);
  for (std::size_t r = 0; r < elite; ++r) w[r] = static_cast<double>(elite - r);
  for (std::size_t lo = 0; lo < elite;) {
    std::size_t hi = lo + 1;
    while (hi < elite && pop[order[hi]].fitness == pop[order[lo]].fitness) ++hi;
    double mean = 0.0;
    for (std::size_t r = lo; r < hi; ++r) mean += w[r];
    mean /= static_cast<double>(hi - lo);
    for (std::size_t r = lo; r < hi; ++r) w[r] = mean;
    lo = hi;
  }
  return w;
}

// Two distinct members of the top `elite`, drawn with rank_weights();
// the second draw excludes the first. Returns indices into `pop`.
inline std::pair<std::size_t, std::size_t> select_parents(const std::vector<Individual>& pop, std::size_t elite,
                                                          Rng& rng) {
  require(elite >= 2 && elite <= pop.size(), "select_parents: need 2 <= elite <= population, elite = ", elite);
  const auto order = rank_order(pop);
  std::vector<double> w = rank_weights(pop, order, elite);
  std::discrete_distribution<std::size_t> first(w.begin(), w.end());
  const std::size_t a = first(rng);
  w[a] = 0.0;
  std::discrete_distribution<std::size_t> second(w.begin(), w.end());
  const std::size_t b = second(rng);
  return {order[a], order[b]};
}

// Uniform crossover.
inline Genome crossover(const Genome& p1, const Genome& p2, Rng& rng) {
  require(p1.genes.size() == p2.genes.size(), "crossover: parent lengths differ");
  std::bernoulli_distribution coin(0.5);
  std::vector<double> child(p1.genes.size());
  for (std::size_t i = 0; i < child.size(); ++i) child[i] = coin(rng) ? p1.genes[i] : p2.genes[i];
  Genome g;
  g.genes = std::move(child);
  return g;
}

// Per gene, with probability mutation_rate: += U(-range, range).
inline Genome mutate(Genome g, const GaConfig& cfg, Rng& rng) {
  std::bernoulli_distribution hit(cfg.mutation_rate);
  std::uniform_real_distribution<double> delta(-cfg.mutation_range, cfg.mutation_range);
  for (double& v : g.genes)
    if (hit(rng)) v += delta(rng);
  g.fitness.reset();
  return g;
}

inline std::vector<Genome> next_generation(const std::vector<Individual>& pop, const GaConfig& cfg, Rng& rng) {
  require(pop.size() == cfg.population, "next_generation: population size ", pop.size(), " != ", cfg.population);
  const auto order = rank_order(pop);
  std::vector<Genome> next;
  next.reserve(cfg.population);
  for (std::size_t r = 0; r < cfg.elite; ++r) {
    Genome g = pop[order[r]].genome;
    g.fitness.reset();
    next.push_back(std::move(g));
  }
  while (next.size() < cfg.population) {
    const auto [i, j] = select_parents(pop, cfg.elite, rng);
    next.push_back(mutate(crossover(pop[i].genome, pop[j].genome, rng), cfg, rng));
  }
  return next;
}

inline Genome random_genome(double range, Rng& rng) {
  std::uniform_real_distribution<double> u(-range, range);
  std::vector<double> genes(kGenomeLength);
  for (double& v : genes) v = u(rng);
  return Genome(std::move(genes));
}

// ---------------------------------------------------------------------------
// Driver.

inline std::uint64_t generation_seed(std::uint64_t master_seed, std::size_t generation) {
  return derive_seed({master_seed, generation});
}

inline std::uint64_t evaluation_seed(std::uint64_t generation_seed, std::size_t k) {
  return derive_seed({generation_seed, k});
}

// Evaluation(const Genome&, std::uint64_t seed); called concurrently when workers > 1.
template <typename F>
concept GenomeEvaluator = requires(const F& f, const Genome& g, std::uint64_t s) {
  { f(g, s) } -> std::convertible_to<Evaluation>;
};

// Evaluation(std::uint64_t seed) for the AMR-free learner.
using BaselineEvaluator = std::function<Evaluation(std::uint64_t)>;

struct GenerationSummary {
  std::size_t generation = 0;
  std::uint64_t seed = 0;
  double mean_fitness = 0.0;
  double max_fitness = 0.0;
  Genome best;
  std::optional<double> matched_baseline;  // mean over the generation's seeds
};

struct EvolutionResult {
  std::vector<EvalRecord> records;
  std::vector<GenerationSummary> generations;
};

namespace detail {

// Runs task(i) for i < n on `workers` threads; rethrows the first failure.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& task) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline double mean_or_fault(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) {
    if (!std::isfinite(x)) return kFaultFitness;
    s += x;
  }
  return s / static_cast<double>(xs.size());
}

}  // namespace detail

template <GenomeEvaluator F>
EvolutionResult run_evolution(const GaConfig& cfg, const F& evaluator, std::uint64_t master_seed,
                              const BaselineEvaluator& baseline = {},
                              const std::function<void(const GenerationSummary&)>& on_generation = {}) {
  cfg.validate();
  EvolutionResult out;

  Rng init_rng(derive_seed({master_seed, 0x1417ULL}));
  std::vector<Genome> genomes;
  for (std::size_t i = 0; i < cfg.population; ++i) genomes.push_back(random_genome(cfg.init_range, init_rng));

  for (std::size_t gen = 0; gen < cfg.generations; ++gen) {
    const std::uint64_t gseed = generation_seed(master_seed, gen);
    const std::size_t k_seeds = cfg.seeds_per_genome;

    // Flattened (individual, seed) jobs plus optional baseline jobs.
    const std::size_t genome_jobs = cfg.population * k_seeds;
    const std::size_t baseline_jobs = (cfg.matched_baseline && baseline) ? k_seeds : 0;
    std::vector<Evaluation> results(genome_jobs + baseline_jobs);
    detail::parallel_for(genome_jobs + baseline_jobs, cfg.workers, [&](std::size_t job) {
      if (job < genome_jobs) {
        const std::size_t ind = job / k_seeds, k = job % k_seeds;
        results[job] = evaluator(genomes[ind], evaluation_seed(gseed, k));
      } else {
        results[job] = baseline(evaluation_seed(gseed, job - genome_jobs));
      }
    });

    std::vector<Individual> pop(cfg.population);
    for (std::size_t i = 0; i < cfg.population; ++i) {
      EvalRecord rec{gen, i, gseed, kFaultFitness, {}};
      std::vector<double> per_seed;
      for (std::size_t k = 0; k < k_seeds; ++k) {
        const auto& ev = results[i * k_seeds + k];
        per_seed.push_back(std::isnan(ev.fitness) ? kFaultFitness : ev.fitness);
        rec.episode_scores.insert(rec.episode_scores.end(), ev.episode_scores.begin(), ev.episode_scores.end());
      }
      rec.fitness = detail::mean_or_fault(per_seed);
      pop[i] = {genomes[i], rec.fitness, gseed};
      pop[i].genome.fitness = rec.fitness;
      out.records.push_back(std::move(rec));
    }

    GenerationSummary summary;
    summary.generation = gen;
    summary.seed = gseed;
    const auto order = rank_order(pop);
    summary.best = pop[order.front()].genome;
    summary.max_fitness = pop[order.front()].fitness;
    double sum = 0.0;
    for (const auto& ind : pop) sum += ind.fitness;
    summary.mean_fitness = sum / static_cast<double>(pop.size());
    if (baseline_jobs) {
      std::vector<double> b;
      for (std::size_t k = 0; k < k_seeds; ++k) b.push_back(results[genome_jobs + k].fitness);
      summary.matched_baseline = detail::mean_or_fault(b);
    }
    if (on_generation) on_generation(summary);
    out.generations.push_back(std::move(summary));

    if (gen + 1 < cfg.generations) {
      Rng breed_rng(derive_seed({master_seed, gen, 0xB7EEDULL}));
      genomes = next_generation(pop, cfg, breed_rng);
    }
  }
  return out;
}

// AMR learners on `make`, one episodes_per_eval-long run per seed.
struct RlGenomeEvaluator {
  EnvFactory make;
  Hyperparams hp;  // hp.episodes is the evaluation length

  Evaluation operator()(const Genome& g, std::uint64_t seed) const { return evaluate_run(&g, make, hp, seed); }
  Evaluation baseline(std::uint64_t seed) const { return evaluate_run(nullptr, make, hp, seed); }
};

inline RlGenomeEvaluator make_rl_evaluator(EnvFactory make, Hyperparams hp, const GaConfig& cfg) {
  hp.episodes = cfg.episodes_per_eval;
  hp.validate();
  return {std::move(make), hp};
}

}  // namespace amrl
