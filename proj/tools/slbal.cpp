// slbal: run balance-assistance trials, compare conditions, sweep parameters.

#include <CLI11.hpp>
#include <iostream>

#include "slbal/commands.hpp"

namespace {

using namespace slbal;

struct Cli {
  std::string scenario = "frontal";
  std::string condition = "comp";
  std::string config;
  std::vector<std::string> sets;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out = "out";
  int trials = 1;
  bool timing = false;
  unsigned jobs = 0;
  std::string param;
  std::vector<std::string> values;
  bool no_trial_files = false;
};

CommandOptions build_options(const Cli& cli) {
  CommandOptions opt;
  opt.scenario = parse_scenario_kind(cli.scenario);
  opt.condition = parse_condition(cli.condition);
  if (!cli.config.empty()) apply_config_file(opt.settings, cli.config);
  for (const auto& s : cli.sets) apply_assignment(opt.settings, s, "--set", 0);
  if (cli.seed_given) opt.settings.sim.seed = cli.seed;
  opt.settings.sim_config().validate();
  opt.settings.scenario(opt.scenario).validate();
  opt.out_dir = cli.out;
  opt.trials = cli.trials;
  opt.timing = cli.timing;
  opt.jobs = cli.jobs;
  opt.write_trials = !cli.no_trial_files;
  return opt;
}

void add_common(CLI::App* app, Cli& cli) {
  app->add_option("--scenario", cli.scenario, "frontal | lateral")->check(CLI::IsMember({"frontal", "lateral"}));
  app->add_option("--config", cli.config, "key = value configuration file");
  app->add_option("--set", cli.sets, "override, key=value (repeatable)");
  app->add_option_function<std::uint64_t>(
      "--seed", [&cli](std::uint64_t s) { cli.seed = s, cli.seed_given = true; }, "noise seed");
  app->add_option("--out", cli.out, "output directory");
  app->add_flag("--timing", cli.timing, "include wall-clock solve times in trial CSVs");
  app->add_option("--jobs", cli.jobs, "worker threads for multi-trial commands (0: all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Supernumerary-limb balance assistance simulator"};
  app.require_subcommand(1);
  Cli cli;

  auto* run = app.add_subcommand("run", "simulate one trial");
  add_common(run, cli);
  run->add_option("--condition", cli.condition, "honly | nocomp | comp")
      ->check(CLI::IsMember({"honly", "nocomp", "comp"}));

  auto* compare = app.add_subcommand("compare", "simulate all three conditions and compare");
  add_common(compare, cli);
  compare->add_option("--trials", cli.trials, "seeds per condition")->check(CLI::PositiveNumber);
  compare->add_flag("--no-trial-files", cli.no_trial_files, "skip per-trial CSV and metadata");

  auto* sweep = app.add_subcommand("sweep", "repeat the comparison over values of one key");
  add_common(sweep, cli);
  sweep->add_option("--param", cli.param, "configuration key, e.g. planner.gamma")->required();
  sweep->add_option("--values", cli.values, "comma-separated values")->required()->delimiter(',');
  sweep->add_option("--trials", cli.trials, "seeds per condition")->check(CLI::PositiveNumber);

  auto* keys = app.add_subcommand("keys", "list configuration keys with units");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (keys->parsed()) {
      for (const auto& k : schema()) std::cout << k.key << " [" << k.unit << "] " << k.doc << '\n';
      return kExitOk;
    }
    const CommandOptions opt = build_options(cli);
    if (run->parsed()) return cmd_run(opt, std::cout);
    if (compare->parsed()) return cmd_compare(opt, std::cout);
    if (sweep->parsed()) return cmd_sweep(opt, cli.param, cli.values, std::cout);
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return kExitUsage;
}
