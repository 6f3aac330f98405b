// Experiment configuration and CSV emission behind the isacopt CLI.
//
// Config format: flat key=value lines, '#' starts a comment. Noise powers are
// accepted in dBm (*_dbm keys, the usual datasheet convention) or linear W
// giving both for the same quantity is an error.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "isac/benchmarks.hpp"
#include "isac/oracle.hpp"
#include "isac/solve.hpp"

namespace isac {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SweepAxis { None, Crb, Rate, Distance };

enum class SchemeSel { Optimal, Isotropic, CommBased, SensingBased, AlwaysOn };

const char* to_string(SchemeSel s);

struct ExperimentConfig {
  SystemParams params;   // noises resolved to linear W
  QosTargets targets;
  double distance_m = 100.0;
  double rician_k = 1.0;
  std::uint64_t seed = 1;

  SweepAxis sweep_axis = SweepAxis::None;
  double sweep_start = 0.0;
  double sweep_stop = 0.0;
  int sweep_points = 0;
  bool sweep_log = false;

  std::vector<SchemeSel> schemes;  // defaults to all five
  long trials = 10000;
  int scatterers = 3;
  std::string output_path;

  bool include_static = false;
  bool verbose = false;
};

// Defaults follow the evaluation setup: M=6, Ns=8, Nc=6, B=10 MHz, both
// noise powers -103 dBm, eta=0.38, P_c=45 W, 150/256-symbol durations,
// d=100 m, Rician factor 1, R=18 bps/Hz, CRB ceiling 0.25.
ExperimentConfig default_config();

// Throws ConfigError naming the offending key/field.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// %.12g rendering shared by every CSV writer (deterministic across runs).
std::string csv_double(double v);

std::string sweep_csv_header(const ExperimentConfig& cfg);

// One regime-classified solve; returns header + one row. Throws
// InfeasibleError on an infeasible point after emitting nothing.
struct SolveOutput {
  std::string csv;      // header + row
  IsacSolution solution;
  bool feasible = true;
};
SolveOutput run_solve(const ExperimentConfig& cfg);

// Full sweep: one row per (sweep value x scheme), channel fixed by the seed.
std::string run_sweep(const ExperimentConfig& cfg);

// Monte-Carlo CRB validation of the covariance produced by run_solve.
std::string run_validate(const ExperimentConfig& cfg);

}  // namespace isac
