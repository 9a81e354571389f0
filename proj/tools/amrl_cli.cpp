// amrl: baseline DDPG runs, AMR genome evolution, genome evaluation and
// log comparison.
//
//   amrl baseline    [--config PATH] [--seed N] [--out DIR] [--workers N]
//   amrl evolve      [--config PATH] [--seed N] [--out DIR] [--workers N]
//   amrl eval-genome --genome PATH [--config PATH] [--seed N] [--out DIR]
//   amrl compare     BASELINE_DIR EVOLVE_DIR [--out DIR]
//
// Exit status: 0 success, 2 configuration error, 3 numeric fault.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "amrl/amrl.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
  std::string genome;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "YAML experiment config (defaults apply when omitted)");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--workers", f.workers, "parallel evaluations")->check(CLI::PositiveNumber);
}

int run_mode(amrl::Mode mode, const RunFlags& f) {
  amrl::ExperimentConfig cfg;
  try {
    cfg = f.config.empty() ? amrl::parse_config("", mode) : amrl::load_config(f.config, mode);
  } catch (const amrl::ConfigError& e) {
    std::cerr << (f.config.empty() ? "config" : f.config) << ": " << e.what() << '\n';
    return amrl::kExitConfig;
  }
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.out) cfg.out_dir = *f.out;
  if (f.workers) cfg.ga.workers = *f.workers;
  if (!f.genome.empty()) cfg.genome_path = f.genome;
  return amrl::run(cfg, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmented memory replay laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", AMRL_VERSION);

  RunFlags baseline_flags, evolve_flags, eval_flags;
  auto* baseline = app.add_subcommand("baseline", "independent DDPG runs without augmentation");
  add_run_flags(baseline, baseline_flags);
  auto* evolve = app.add_subcommand("evolve", "evolve AMR genomes with the genetic algorithm");
  add_run_flags(evolve, evolve_flags);
  auto* eval = app.add_subcommand("eval-genome", "evaluate one AMR genome file");
  add_run_flags(eval, eval_flags);
  eval->add_option("--genome", eval_flags.genome, "genome text file")->required();

  std::string base_dir, evolve_dir, compare_out;
  auto* compare = app.add_subcommand("compare", "compare a baseline run against an evolve run");
  compare->add_option("baseline", base_dir, "baseline output directory")->required();
  compare->add_option("evolve", evolve_dir, "evolve output directory")->required();
  compare->add_option("--out", compare_out, "where to write comparison.csv and summary.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : amrl::kExitConfig;
  }

  if (*baseline) return run_mode(amrl::Mode::baseline, baseline_flags);
  if (*evolve) return run_mode(amrl::Mode::evolve, evolve_flags);
  if (*eval) return run_mode(amrl::Mode::eval_genome, eval_flags);

  try {
    const auto summary = amrl::compare(base_dir, evolve_dir);
    amrl::print_comparison(summary, std::cout);
    amrl::write_comparison(summary, std::filesystem::path(compare_out.empty() ? evolve_dir : compare_out));
  } catch (const amrl::ContractError& e) {
    std::cerr << "compare: " << e.what() << '\n';
    return amrl::kExitConfig;
  }
  return amrl::kExitOk;
}
