#pragma once

// Experiment runner and log comparison.
//
// Output directory layout:
//   manifest.json            resolved config, version, seed, status
//   episodes.csv             baseline / eval-genome:
//                            run,seed,episode,score,steps,sigma,mean_critic_loss
//   generations.csv          evolve: generation,individual,seed,fitness
//   matched_baseline.csv     evolve with ga.matched_baseline:
//                            generation,seed,fitness
//   best_genome_gen{K}.txt   evolve: best genome of generation K
//   comparison.csv           compare: generation,amr_mean,amr_max,baseline_mean,
//                            baseline_ci_low,baseline_ci_high,matched_baseline
//   summary.json             compare: ComparisonSummary
//
// Reals are written in shortest round-trip form; faulted fitness is "-inf".

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amrl/amr.hpp"
#include "amrl/config.hpp"
#include "amrl/ddpg.hpp"
#include "amrl/envs.hpp"
#include "amrl/error.hpp"
#include "amrl/evolution.hpp"

#ifndef AMRL_VERSION
#define AMRL_VERSION "unknown"
#endif

namespace amrl {

enum ExitStatus : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3 };

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_real(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && end == s.data() + s.size(), "not a number: '", s, "'");
  return v;
}

// Header-indexed CSV table; no quoting (all fields are numeric or simple).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ContractError("CSV has no column '" + name + "'");
  }

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  }

  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "cannot open '", path.string(), "'");
    CsvTable t;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto cells = split(line);
      require(cells.size() == t.header.size(), path.string(), ":", lineno, ": expected ", t.header.size(),
              " fields, got ", cells.size());
      t.rows.push_back(std::move(cells));
    }
    return t;
  }
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    require(static_cast<bool>(out_), "cannot write '", path.string(), "'");
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write '", path.string(), "'");
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '", path.string(), "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

inline Genome load_genome(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open genome file '", path, "'");
  return read_genome(in);
}

inline void save_genome(const std::string& path, const Genome& g) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write genome file '", path, "'");
  write_genome(out, g);
}

// ---------------------------------------------------------------------------
// run()

namespace detail {

inline void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg, std::string_view status,
                           const std::string& note = {}) {
  nlohmann::json m;
  m["format"] = "amrl-manifest";
  m["version"] = AMRL_VERSION;
  m["master_seed"] = cfg.master_seed;
  m["status"] = status;
  if (!note.empty()) m["note"] = note;
  m["config"] = to_json(cfg);
  write_json(dir / "manifest.json", m);
}

inline void write_episode_rows(CsvWriter& csv, std::size_t run, std::uint64_t seed,
                               const std::vector<EpisodeResult>& eps) {
  for (std::size_t e = 0; e < eps.size(); ++e) {
    const auto& r = eps[e];
    csv.row({std::to_string(run), std::to_string(seed), std::to_string(e), format_real(r.score),
             std::to_string(r.steps), format_real(r.sigma), format_real(r.mean_critic_loss)});
  }
}

inline const std::vector<std::string>& episode_header() {
  static const std::vector<std::string> h{"run", "seed", "episode", "score", "steps", "sigma", "mean_critic_loss"};
  return h;
}

// Episode-by-episode learner run; throws NumericFault.
inline std::vector<EpisodeResult> learner_run(const ExperimentConfig& cfg, const Hyperparams& hp, std::uint64_t seed,
                                              const Genome* genome) {
  Rng rng(seed);
  auto env = make_env(cfg.env, cfg.env_params);
  Agent agent(env->spec(), hp, rng);
  std::optional<Augmenter> amr;
  if (genome) amr = Augmenter{AmrNetwork::from_genome(*genome), hp.beta, hp.amr_bounded, {}};
  std::vector<EpisodeResult> eps;
  for (std::size_t e = 0; e < hp.episodes; ++e)
    eps.push_back(amr ? run_episode(agent, *env, &*amr, rng) : run_episode(agent, *env, rng));
  return eps;
}

inline std::uint64_t baseline_run_seed(std::uint64_t master, std::size_t run) { return derive_seed({master, run}); }

inline int run_baseline(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  std::vector<std::vector<EpisodeResult>> runs(cfg.repeat);
  std::vector<std::string> faults(cfg.repeat);
  parallel_for(cfg.repeat, cfg.ga.workers, [&](std::size_t r) {
    try {
      runs[r] = learner_run(cfg, cfg.hp, baseline_run_seed(cfg.master_seed, r), nullptr);
    } catch (const NumericFault& e) {
      faults[r] = e.what();
    }
  });
  CsvWriter csv(dir / "episodes.csv", episode_header());
  for (std::size_t r = 0; r < cfg.repeat; ++r) {
    if (!faults[r].empty()) {
      log << "numeric fault in run " << r << ": " << faults[r] << '\n';
      write_manifest(dir, cfg, "incomplete", "numeric fault in run " + std::to_string(r));
      return kExitNumeric;
    }
    write_episode_rows(csv, r, baseline_run_seed(cfg.master_seed, r), runs[r]);
    double total = 0.0;
    for (const auto& e : runs[r]) total += e.score;
    log << "run " << r << " fitness " << format_real(total) << '\n';
  }
  return kExitOk;
}

inline int run_evolve(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const auto evaluator = make_rl_evaluator(env_factory(cfg.env, cfg.env_params), cfg.hp, cfg.ga);
  BaselineEvaluator baseline;
  if (cfg.ga.matched_baseline) baseline = [&](std::uint64_t s) { return evaluator.baseline(s); };

  CsvWriter gens(dir / "generations.csv", {"generation", "individual", "seed", "fitness"});
  std::optional<CsvWriter> matched;
  if (cfg.ga.matched_baseline) matched.emplace(dir / "matched_baseline.csv", std::vector<std::string>{"generation", "seed", "fitness"});

  auto on_generation = [&](const GenerationSummary& g) {
    save_genome((dir / ("best_genome_gen" + std::to_string(g.generation) + ".txt")).string(), g.best);
    log << "generation " << g.generation << " mean " << format_real(g.mean_fitness) << " max "
        << format_real(g.max_fitness);
    if (g.matched_baseline) {
      matched->row({std::to_string(g.generation), std::to_string(g.seed), format_real(*g.matched_baseline)});
      log << " baseline " << format_real(*g.matched_baseline);
    }
    log << std::endl;
  };
  const auto result = run_evolution(cfg.ga, evaluator, cfg.master_seed, baseline, on_generation);
  for (const auto& r : result.records)
    gens.row({std::to_string(r.generation), std::to_string(r.individual), std::to_string(r.seed),
              format_real(r.fitness)});
  return kExitOk;
}

inline int run_eval_genome(const ExperimentConfig& cfg, const std::filesystem::path& dir, std::ostream& log) {
  const Genome g = load_genome(cfg.genome_path);
  Hyperparams hp = cfg.hp;
  hp.episodes = cfg.ga.episodes_per_eval;
  std::vector<EpisodeResult> eps;
  try {
    eps = learner_run(cfg, hp, cfg.master_seed, &g);
  } catch (const NumericFault& e) {
    log << "numeric fault: " << e.what() << '\n';
    log << "fitness " << format_real(kFaultFitness) << '\n';
    write_manifest(dir, cfg, "incomplete", "numeric fault");
    return kExitNumeric;
  }
  CsvWriter csv(dir / "episodes.csv", episode_header());
  write_episode_rows(csv, 0, cfg.master_seed, eps);
  double total = 0.0;
  for (const auto& e : eps) total += e.score;
  log << "fitness " << format_real(total) << '\n';
  return kExitOk;
}

}  // namespace detail

// Executes one experiment. The manifest is written first with status
// "running" and rewritten as "complete" only after every output is on disk.
inline int run(const ExperimentConfig& cfg, std::ostream& log = std::cout) {
  try {
    cfg.validate();
    if (cfg.mode == Mode::eval_genome) require(!cfg.genome_path.empty(), "eval-genome needs a genome file");
  } catch (const ContractError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  detail::write_manifest(dir, cfg, "running");
  int status = kExitOk;
  try {
    switch (cfg.mode) {
      case Mode::baseline: status = detail::run_baseline(cfg, dir, log); break;
      case Mode::evolve: status = detail::run_evolve(cfg, dir, log); break;
      case Mode::eval_genome: status = detail::run_eval_genome(cfg, dir, log); break;
    }
  } catch (const ContractError& e) {
    log << "error: " << e.what() << '\n';
    detail::write_manifest(dir, cfg, "incomplete", e.what());
    return kExitConfig;
  } catch (const NumericFault& e) {
    log << "numeric fault: " << e.what() << '\n';
    detail::write_manifest(dir, cfg, "incomplete", e.what());
    return kExitNumeric;
  }
  if (status == kExitOk) detail::write_manifest(dir, cfg, "complete");
  return status;
}

// ---------------------------------------------------------------------------
// compare()

inline double percent_improvement(double amr_mean, double baseline_mean) {
  return 100.0 * (amr_mean - baseline_mean) / std::abs(baseline_mean);
}

struct GenerationPoint {
  std::size_t generation = 0;
  double amr_mean = 0.0;
  double amr_max = 0.0;
  std::optional<double> matched_baseline;
};

struct ComparisonSummary {
  std::string env;
  std::size_t baseline_runs = 0;
  double baseline_mean = 0.0;
  double baseline_ci_low = 0.0;   // mean -/+ 1.96 standard errors
  double baseline_ci_high = 0.0;
  std::vector<GenerationPoint> generations;
  double final_mean = 0.0;
  double percent_improvement = 0.0;
  std::optional<double> matched_percent_improvement;  // final generation vs its matched baseline

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["env"] = env;
    j["baseline"] = {{"runs", baseline_runs},
                     {"mean", baseline_mean},
                     {"ci95_low", baseline_ci_low},
                     {"ci95_high", baseline_ci_high}};
    j["generations"] = nlohmann::json::array();
    for (const auto& g : generations) {
      nlohmann::json row{{"generation", g.generation}, {"amr_mean", g.amr_mean}, {"amr_max", g.amr_max}};
      if (g.matched_baseline) row["matched_baseline"] = *g.matched_baseline;
      j["generations"].push_back(row);
    }
    j["final_generation_mean"] = final_mean;
    j["percent_improvement"] = percent_improvement;
    if (matched_percent_improvement) j["matched_percent_improvement"] = *matched_percent_improvement;
    return j;
  }
};

// Baseline fitness per run (sum of scores) from an episodes.csv.
inline std::vector<double> baseline_fitness(const CsvTable& t) {
  const auto run_col = t.column("run"), score_col = t.column("score");
  std::map<std::size_t, double> per_run;
  for (const auto& row : t.rows) per_run[std::stoul(row[run_col])] += parse_real(row[score_col]);
  std::vector<double> out;
  for (const auto& [_, v] : per_run) out.push_back(v);
  return out;
}

// Pure function of the two run directories: `baseline_dir` from a baseline
// run, `evolve_dir` from an evolve run on the same environment.
inline ComparisonSummary compare(const std::filesystem::path& baseline_dir, const std::filesystem::path& evolve_dir) {
  const auto bm = read_json(baseline_dir / "manifest.json");
  const auto em = read_json(evolve_dir / "manifest.json");
  ComparisonSummary s;
  try {
    require(bm.at("config").at("mode") == "baseline", baseline_dir.string(), " is not a baseline run");
    require(em.at("config").at("mode") == "evolve", evolve_dir.string(), " is not an evolve run");
    const auto benv = bm.at("config").at("env").get<std::string>();
    const auto eenv = em.at("config").at("env").get<std::string>();
    require(benv == eenv, "environment mismatch: baseline ran '", benv, "', evolve ran '", eenv, "'");
    require(bm.at("config").at("env_params") == em.at("config").at("env_params"),
            "environment parameter mismatch between baseline and evolve runs");
    const auto bep = bm.at("config").at("ddpg").at("episodes").get<std::size_t>();
    const auto eep = em.at("config").at("ga").at("episodes_per_eval").get<std::size_t>();
    require(bep == eep, "episode count mismatch: baseline ran ", bep, " episodes, evolve evaluated ", eep);
    s.env = benv;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed manifest: ") + e.what());
  }

  const auto base = baseline_fitness(CsvTable::read(baseline_dir / "episodes.csv"));
  require(!base.empty(), "baseline log has no runs");
  s.baseline_runs = base.size();
  double sum = 0.0;
  for (double v : base) sum += v;
  s.baseline_mean = sum / static_cast<double>(base.size());
  double var = 0.0;
  for (double v : base) var += (v - s.baseline_mean) * (v - s.baseline_mean);
  const double sd = base.size() > 1 ? std::sqrt(var / static_cast<double>(base.size() - 1)) : 0.0;
  const double half = 1.96 * sd / std::sqrt(static_cast<double>(base.size()));
  s.baseline_ci_low = s.baseline_mean - half;
  s.baseline_ci_high = s.baseline_mean + half;

  const auto gens = CsvTable::read(evolve_dir / "generations.csv");
  const auto gcol = gens.column("generation"), fcol = gens.column("fitness");
  std::map<std::size_t, std::vector<double>> by_gen;
  for (const auto& row : gens.rows) by_gen[std::stoul(row[gcol])].push_back(parse_real(row[fcol]));
  require(!by_gen.empty(), "evolve log has no generations");
  for (const auto& [g, fs] : by_gen) {
    GenerationPoint p;
    p.generation = g;
    double total = 0.0, best = -std::numeric_limits<double>::infinity();
    for (double f : fs) total += f, best = std::max(best, f);
    p.amr_mean = total / static_cast<double>(fs.size());
    p.amr_max = best;
    s.generations.push_back(p);
  }

  const auto matched_path = evolve_dir / "matched_baseline.csv";
  if (std::filesystem::exists(matched_path)) {
    const auto mt = CsvTable::read(matched_path);
    const auto mg = mt.column("generation"), mf = mt.column("fitness");
    for (const auto& row : mt.rows) {
      const auto g = std::stoul(row[mg]);
      for (auto& p : s.generations)
        if (p.generation == g) p.matched_baseline = parse_real(row[mf]);
    }
  }

  s.final_mean = s.generations.back().amr_mean;
  s.percent_improvement = percent_improvement(s.final_mean, s.baseline_mean);
  if (s.generations.back().matched_baseline)
    s.matched_percent_improvement = percent_improvement(s.final_mean, *s.generations.back().matched_baseline);
  return s;
}

inline void write_comparison(const ComparisonSummary& s, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  CsvWriter csv(out_dir / "comparison.csv", {"generation", "amr_mean", "amr_max", "baseline_mean", "baseline_ci_low",
                                             "baseline_ci_high", "matched_baseline"});
  for (const auto& g : s.generations)
    csv.row({std::to_string(g.generation), format_real(g.amr_mean), format_real(g.amr_max),
             format_real(s.baseline_mean), format_real(s.baseline_ci_low), format_real(s.baseline_ci_high),
             g.matched_baseline ? format_real(*g.matched_baseline) : ""});
  write_json(out_dir / "summary.json", s.to_json());
}

inline void print_comparison(const ComparisonSummary& s, std::ostream& os) {
  os << "env " << s.env << ": baseline mean " << format_real(s.baseline_mean) << " (95% CI "
     << format_real(s.baseline_ci_low) << " .. " << format_real(s.baseline_ci_high) << ", " << s.baseline_runs
     << " runs)\n";
  os << "generation  amr_mean  amr_max  matched_baseline\n";
  for (const auto& g : s.generations)
    os << g.generation << "  " << format_real(g.amr_mean) << "  " << format_real(g.amr_max) << "  "
       << (g.matched_baseline ? format_real(*g.matched_baseline) : "-") << '\n';
  os << "final generation mean " << format_real(s.final_mean) << ", improvement "
     << format_real(s.percent_improvement) << "%";
  if (s.matched_percent_improvement) os << " (vs matched baseline " << format_real(*s.matched_percent_improvement) << "%)";
  os << '\n';
}

}  // namespace amrl
