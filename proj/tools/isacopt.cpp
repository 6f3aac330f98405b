// isacopt — batch experiment runner for the energy-minimal MIMO ISAC design.
//
//   isacopt solve    --config solve.cfg
//   isacopt sweep    --config sweep.cfg --out curve.csv
//   isacopt validate --config solve.cfg
//
// Exit codes: 0 ok, 2 config error, 3 infeasible, 4 internal solver failure.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "isac/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_path;
  std::int64_t seed = -1;
  bool verbose = false;
  bool include_static = false;
};

void add_common(CLI::App* cmd, CommonOpts* o) {
  cmd->add_option("--config", o->config_path, "key=value config file")
      ->required();
  cmd->add_option("--out", o->out_path, "output CSV path (default stdout)");
  cmd->add_option("--seed", o->seed, "override the config seed");
  cmd->add_flag("--verbose", o->verbose, "append solver diagnostics columns");
  cmd->add_flag("--include-static", o->include_static,
                "add the static power term to reported energy");
}

isac::ExperimentConfig load(const CommonOpts& o) {
  isac::ExperimentConfig cfg = isac::parse_config_file(o.config_path);
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  cfg.verbose = o.verbose;
  cfg.include_static = o.include_static;
  return cfg;
}

void emit(const std::string& csv, const std::string& out_path,
          const std::string& config_default) {
  const std::string& path = !out_path.empty() ? out_path : config_default;
  if (path.empty()) {
    std::cout << csv;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw isac::ConfigError("cannot open output file '" + path + "'");
  f << csv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"isacopt: minimum-energy MIMO ISAC transmit design"};
  app.require_subcommand(1);

  CommonOpts solve_o, sweep_o, validate_o;
  CLI::App* cmd_solve = app.add_subcommand("solve", "one regime-classified solve");
  add_common(cmd_solve, &solve_o);
  CLI::App* cmd_sweep = app.add_subcommand("sweep", "parameter sweep to CSV");
  add_common(cmd_sweep, &sweep_o);
  CLI::App* cmd_validate =
      app.add_subcommand("validate", "Monte-Carlo CRB validation");
  add_common(cmd_validate, &validate_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cmd_solve->parsed()) {
      const isac::ExperimentConfig cfg = load(solve_o);
      const isac::SolveOutput out = isac::run_solve(cfg);
      std::cout << out.csv;
      return out.feasible ? 0 : 3;
    }
    if (cmd_sweep->parsed()) {
      const isac::ExperimentConfig cfg = load(sweep_o);
      emit(isac::run_sweep(cfg), sweep_o.out_path, cfg.output_path);
      return 0;
    }
    const isac::ExperimentConfig cfg = load(validate_o);
    emit(isac::run_validate(cfg), validate_o.out_path, cfg.output_path);
    return 0;
  } catch (const isac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const isac::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return 4;
  }
}
