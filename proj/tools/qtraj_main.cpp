// qtraj: continuous-measurement trajectory simulator.
//
//   qtraj simulate --config run.cfg --out dir            one trajectory
//   qtraj ensemble --config run.cfg --out dir -j 8       ensemble + reductions
//   qtraj signal   --config run.cfg --delta-t 0.5        distinguishability table
//
// Exit codes: 0 success, 2 configuration error, 3 numerical divergence.

#include <cstdio>
#include <exception>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "qtraj/runcfg.hpp"
#include "qtraj/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App& cmd, CommonArgs& args) {
  cmd.add_option("-c,--config", args.config_path, "experiment config file")
      ->required();
  cmd.add_option("-o,--out", args.out_dir, "output directory");
  cmd.add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

qtraj::ExperimentConfig load(const CommonArgs& args) {
  qtraj::ExperimentConfig ec = qtraj::load_experiment_config(args.config_path);
  if (args.seed_set) ec.seed = args.seed;
  return ec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continuous dispersive-measurement trajectory simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qtraj::kVersion));

  CommonArgs sim_args, ens_args, sig_args;
  int threads = 1;
  double delta_t = 0.0;

  CLI::App* sim = app.add_subcommand("simulate", "run a single trajectory");
  add_common(*sim, sim_args);

  CLI::App* ens =
      app.add_subcommand("ensemble", "run an ensemble and reduce it");
  add_common(*ens, ens_args);
  ens->add_option("-j,--threads", threads, "worker threads (results identical)")
      ->check(CLI::PositiveNumber);

  CLI::App* sig = app.add_subcommand(
      "signal", "tabulate pairwise measurement distinguishability");
  add_common(*sig, sig_args);
  sig->add_option("--delta-t", delta_t, "record segment length, us")
      ->required()
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
    if (sim->parsed()) {
      qtraj::run_simulate(load(sim_args), sim_args.out_dir);
    } else if (ens->parsed()) {
      qtraj::run_ensemble(load(ens_args), ens_args.out_dir, threads);
    } else {
      qtraj::run_signal(load(sig_args), delta_t, sig_args.out_dir);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "qtraj: %s\n", e.what());
    return 2;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "qtraj: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "qtraj: %s\n", e.what());
    return 1;
  }
  return 0;
}
