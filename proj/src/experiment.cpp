#include "isac/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace isac {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& val) {
  char* end = nullptr;
  const double v = std::strtod(val.c_str(), &end);
  if (end == val.c_str() || *end != '\0') {
    throw ConfigError(key + ": not a number '" + val + "'");
  }
  return v;
}

long long parse_int(const std::string& key, const std::string& val) {
  char* end = nullptr;
  const long long v = std::strtoll(val.c_str(), &end, 10);
  if (end == val.c_str() || *end != '\0') {
    throw ConfigError(key + ": not an integer '" + val + "'");
  }
  return v;
}

std::vector<SchemeSel> all_schemes() {
  return {SchemeSel::Optimal, SchemeSel::Isotropic, SchemeSel::CommBased,
          SchemeSel::SensingBased, SchemeSel::AlwaysOn};
}

SchemeSel parse_scheme(const std::string& name) {
  if (name == "optimal") return SchemeSel::Optimal;
  if (name == "isotropic") return SchemeSel::Isotropic;
  if (name == "comm_based") return SchemeSel::CommBased;
  if (name == "sensing_based") return SchemeSel::SensingBased;
  if (name == "always_on") return SchemeSel::AlwaysOn;
  throw ConfigError("schemes: unknown scheme '" + name + "'");
}

const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::None: return "none";
    case SweepAxis::Crb: return "crb";
    case SweepAxis::Rate: return "rate";
    case SweepAxis::Distance: return "distance";
  }
  return "?";
}

// Normalized per-row payload shared by the optimal and benchmark schemes.
struct RowData {
  bool feasible = false;
  double energy = kNan, tau = kNan, rate = kNan, crb = kNan, trace_q = kNan;
  VectorXd p;
  std::string regime;
  bool has_duals = false;
  DualPair duals;
  bool has_diag = false;
  SolverDiagnostics diag;
};

std::string csv_opt(double v) {
  return std::isnan(v) ? std::string() : csv_double(v);
}

void append_row(std::string& out, const ExperimentConfig& cfg,
                const std::string& axis, const std::string& value,
                const std::string& scheme, const RowData& d) {
  out += axis;
  out += ',';
  out += value;
  out += ',';
  out += scheme;
  out += ',';
  out += d.feasible ? '1' : '0';
  double energy = d.energy;
  if (cfg.include_static && !std::isnan(energy)) {
    energy += cfg.params.p_static_w * cfg.params.t_max_s;
  }
  out += ',' + csv_opt(energy) + ',' + csv_opt(d.tau) + ',' + csv_opt(d.rate) +
         ',' + csv_opt(d.crb) + ',' + csv_opt(d.trace_q);
  for (int i = 0; i < cfg.params.m_tx; ++i) {
    out += ',';
    if (d.p.size() > i) out += csv_double(d.p(i));
  }
  out += ',' + d.regime;
  out += ',';
  if (d.has_duals) out += csv_double(d.duals.gamma);
  out += ',';
  if (d.has_duals) out += csv_double(d.duals.nu);
  if (cfg.verbose) {
    out += ',';
    if (d.has_diag) out += std::to_string(d.diag.iterations);
    out += ',';
    if (d.has_diag) out += csv_double(d.diag.duality_gap);
    out += ',';
    if (d.has_diag) out += csv_double(d.diag.kkt_residual_max);
  }
  out += '\n';
}

RowData row_from_solution(const CommChannel& channel, const IsacSolution& sol) {
  RowData d;
  d.regime = to_string(sol.regime);
  if (sol.regime == Regime::Infeasible) return d;
  d.feasible = true;
  d.energy = sol.energy_j;
  d.tau = sol.tau_s;
  d.rate = sol.rate_achieved;
  d.crb = sol.crb_achieved;
  d.p = sol.allocation.size() > 0 ? sol.allocation
                                  : power_allocation(channel, sol.q);
  d.trace_q = sol.allocation.size() > 0 ? sol.allocation.sum()
                                        : std::real(sol.q.trace());
  if (sol.regime == Regime::General) {
    d.has_duals = true;
    d.duals = sol.duals;
    d.has_diag = true;
    d.diag = sol.diag;
  }
  return d;
}

RowData row_from_benchmark(const CommChannel& channel,
                           const BenchmarkResult& b) {
  RowData d;
  if (!b.feasible) return d;
  d.feasible = true;
  d.energy = b.energy_j;
  d.tau = b.tau_s;
  d.rate = b.rate_achieved;
  d.crb = b.crb_achieved;
  d.trace_q = std::real(b.q.trace());
  d.p = power_allocation(channel, b.q);
  return d;
}

void run_point(std::string& out, const ExperimentConfig& cfg,
               const std::string& axis, const std::string& value,
               const SystemParams& params, const CommChannel& channel,
               const QosTargets& targets) {
  for (const SchemeSel s : cfg.schemes) {
    if (s == SchemeSel::Optimal) {
      RowData d;
      try {
        d = row_from_solution(channel, solve(params, channel, targets));
      } catch (const SolverError&) {
        d = RowData{};
        d.regime = to_string(Regime::Infeasible);
      }
      append_row(out, cfg, axis, value, "optimal", d);
    } else {
      Scheme b = Scheme::Isotropic;
      switch (s) {
        case SchemeSel::Isotropic: b = Scheme::Isotropic; break;
        case SchemeSel::CommBased: b = Scheme::CommBased; break;
        case SchemeSel::SensingBased: b = Scheme::SensingBased; break;
        case SchemeSel::AlwaysOn: b = Scheme::AlwaysOn; break;
        default: break;
      }
      append_row(out, cfg, axis, value, to_string(b),
                 row_from_benchmark(channel, run_benchmark(b, params, channel,
                                                           targets)));
    }
  }
}

}  // namespace

const char* to_string(SchemeSel s) {
  switch (s) {
    case SchemeSel::Optimal: return "optimal";
    case SchemeSel::Isotropic: return "isotropic";
    case SchemeSel::CommBased: return "comm_based";
    case SchemeSel::SensingBased: return "sensing_based";
    case SchemeSel::AlwaysOn: return "always_on";
  }
  return "?";
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.params.m_tx = 6;
  cfg.params.n_rx_sense = 8;
  cfg.params.n_rx_comm = 6;
  cfg.params.bandwidth_hz = 1e7;
  cfg.params.noise_comm_w = dbm_to_watt(-103.0);
  cfg.params.noise_sense_w = dbm_to_watt(-103.0);
  cfg.params.pa_efficiency = 0.38;
  cfg.params.p_nontrans_w = 45.0;
  cfg.params.p_static_w = 0.0;
  cfg.params.t_min_s = 150.0 / 1e7;
  cfg.params.t_max_s = 256.0 / 1e7;
  cfg.targets.rate_bps_hz = 18.0;
  cfg.targets.crb_max = 0.25;
  cfg.schemes = all_schemes();
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg = default_config();
  bool comm_dbm = false, comm_w = false, sense_dbm = false, sense_w = false;

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("malformed line (expected key=value): '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "m_tx") cfg.params.m_tx = static_cast<int>(parse_int(key, val));
    else if (key == "n_rx_sense") cfg.params.n_rx_sense = static_cast<int>(parse_int(key, val));
    else if (key == "n_rx_comm") cfg.params.n_rx_comm = static_cast<int>(parse_int(key, val));
    else if (key == "bandwidth_hz") cfg.params.bandwidth_hz = parse_double(key, val);
    else if (key == "noise_comm_dbm") { cfg.params.noise_comm_w = dbm_to_watt(parse_double(key, val)); comm_dbm = true; }
    else if (key == "noise_comm_w") { cfg.params.noise_comm_w = parse_double(key, val); comm_w = true; }
    else if (key == "noise_sense_dbm") { cfg.params.noise_sense_w = dbm_to_watt(parse_double(key, val)); sense_dbm = true; }
    else if (key == "noise_sense_w") { cfg.params.noise_sense_w = parse_double(key, val); sense_w = true; }
    else if (key == "pa_efficiency") cfg.params.pa_efficiency = parse_double(key, val);
    else if (key == "p_nontrans_w") cfg.params.p_nontrans_w = parse_double(key, val);
    else if (key == "p_static_w") cfg.params.p_static_w = parse_double(key, val);
    else if (key == "t_min_s") cfg.params.t_min_s = parse_double(key, val);
    else if (key == "t_max_s") cfg.params.t_max_s = parse_double(key, val);
    else if (key == "distance_m") cfg.distance_m = parse_double(key, val);
    else if (key == "rician_k") cfg.rician_k = parse_double(key, val);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, val));
    else if (key == "rate_bps_hz") cfg.targets.rate_bps_hz = parse_double(key, val);
    else if (key == "crb_max") cfg.targets.crb_max = parse_double(key, val);
    else if (key == "sweep_axis") {
      if (val == "crb") cfg.sweep_axis = SweepAxis::Crb;
      else if (val == "rate") cfg.sweep_axis = SweepAxis::Rate;
      else if (val == "distance") cfg.sweep_axis = SweepAxis::Distance;
      else if (val == "none") cfg.sweep_axis = SweepAxis::None;
      else throw ConfigError("sweep_axis: must be crb|rate|distance|none");
    }
    else if (key == "sweep_start") cfg.sweep_start = parse_double(key, val);
    else if (key == "sweep_stop") cfg.sweep_stop = parse_double(key, val);
    else if (key == "sweep_points") cfg.sweep_points = static_cast<int>(parse_int(key, val));
    else if (key == "sweep_scale") {
      if (val == "log") cfg.sweep_log = true;
      else if (val == "linear") cfg.sweep_log = false;
      else throw ConfigError("sweep_scale: must be log|linear");
    }
    else if (key == "schemes") {
      cfg.schemes.clear();
      std::istringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) cfg.schemes.push_back(parse_scheme(tok));
      }
    }
    else if (key == "trials") cfg.trials = parse_int(key, val);
    else if (key == "scatterers") cfg.scatterers = static_cast<int>(parse_int(key, val));
    else if (key == "output_path") cfg.output_path = val;
    else throw ConfigError("unknown config key '" + key + "'");
  }

  if ((comm_dbm && comm_w) || (sense_dbm && sense_w)) {
    throw ConfigError(
        "noise power: both dBm and W forms given; keep exactly one");
  }

  try {
    cfg.params.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.targets.crb_max > 0.0)) throw ConfigError("crb_max: must be > 0");
  if (!(cfg.targets.rate_bps_hz >= 0.0) ||
      !std::isfinite(cfg.targets.rate_bps_hz)) {
    throw ConfigError("rate_bps_hz: must be finite and >= 0");
  }
  if (!(cfg.distance_m > 0.0)) throw ConfigError("distance_m: must be > 0");
  if (cfg.rician_k < 0.0) throw ConfigError("rician_k: must be >= 0");
  if (cfg.schemes.empty()) throw ConfigError("schemes: must be nonempty");
  if (cfg.trials < 1) throw ConfigError("trials: must be >= 1");
  if (cfg.scatterers < 1) throw ConfigError("scatterers: must be >= 1");
  if (cfg.sweep_axis != SweepAxis::None) {
    if (!(cfg.sweep_start > 0.0)) throw ConfigError("sweep_start: must be > 0");
    if (!(cfg.sweep_stop > cfg.sweep_start)) {
      throw ConfigError("sweep_stop: must be > sweep_start");
    }
    if (cfg.sweep_points < 2) throw ConfigError("sweep_points: must be >= 2");
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string csv_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string sweep_csv_header(const ExperimentConfig& cfg) {
  std::string h =
      "sweep_axis,sweep_value,scheme,feasible,energy_j,tau_s,rate_bps_hz,crb,"
      "trace_q_w";
  for (int i = 1; i <= cfg.params.m_tx; ++i) h += ",p_" + std::to_string(i);
  h += ",regime,gamma,nu";
  if (cfg.verbose) h += ",iterations,duality_gap,kkt_residual_max";
  h += '\n';
  return h;
}

SolveOutput run_solve(const ExperimentConfig& cfg) {
  const CommChannel channel =
      generate_channel(cfg.params, cfg.distance_m, cfg.rician_k, cfg.seed);
  SolveOutput out;
  out.solution = solve(cfg.params, channel, cfg.targets);
  out.feasible = out.solution.regime != Regime::Infeasible;
  out.csv = sweep_csv_header(cfg);
  append_row(out.csv, cfg, axis_name(SweepAxis::None), "", "optimal",
             row_from_solution(channel, out.solution));
  return out;
}

std::string run_sweep(const ExperimentConfig& cfg) {
  if (cfg.sweep_axis == SweepAxis::None) {
    throw ConfigError("sweep_axis: required for the sweep command");
  }
  std::vector<double> values(cfg.sweep_points);
  for (int k = 0; k < cfg.sweep_points; ++k) {
    const double f = static_cast<double>(k) / (cfg.sweep_points - 1);
    values[k] = cfg.sweep_log
                    ? cfg.sweep_start *
                          std::pow(cfg.sweep_stop / cfg.sweep_start, f)
                    : cfg.sweep_start + (cfg.sweep_stop - cfg.sweep_start) * f;
  }

  std::string out = sweep_csv_header(cfg);
  const std::string axis = axis_name(cfg.sweep_axis);
  // The channel realization is pinned by the seed so curves stay comparable
  // across schemes and sweep values.
  CommChannel channel =
      generate_channel(cfg.params, cfg.distance_m, cfg.rician_k, cfg.seed);
  for (const double v : values) {
    QosTargets targets = cfg.targets;
    if (cfg.sweep_axis == SweepAxis::Crb) targets.crb_max = v;
    if (cfg.sweep_axis == SweepAxis::Rate) targets.rate_bps_hz = v;
    if (cfg.sweep_axis == SweepAxis::Distance) {
      channel = generate_channel(cfg.params, v, cfg.rician_k, cfg.seed);
    }
    run_point(out, cfg, axis, csv_double(v), cfg.params, channel, targets);
  }
  return out;
}

std::string run_validate(const ExperimentConfig& cfg) {
  const SolveOutput s = run_solve(cfg);
  if (!s.feasible) {
    throw InfeasibleError("validate: configured QoS point is infeasible");
  }
  const SensingScene scene =
      make_scene(cfg.params, cfg.scatterers, cfg.seed);
  const McReport rep =
      mc_validate_crb(cfg.params, scene, s.solution.q, s.solution.tau_s,
                      cfg.trials, cfg.seed + 1);

  std::string out =
      "trials,empirical_sum_mse,crb_trace_sample,crb_trace_stat,"
      "mse_over_sample,sample_cov_dev,mean_err_fro,max_entry_dev_se,redraws\n";
  out += std::to_string(rep.trials) + ',' + csv_double(rep.empirical_sum_mse) +
         ',' + csv_double(rep.crb_trace_sample) + ',' +
         csv_double(rep.crb_trace_stat) + ',' +
         csv_double(rep.empirical_sum_mse / rep.crb_trace_sample) + ',' +
         csv_double(rep.sample_cov_dev) + ',' + csv_double(rep.mean_err_fro) +
         ',' + csv_double(rep.max_entry_dev_se) + ',' +
         std::to_string(rep.redraws) + '\n';
  return out;
}

}  // namespace isac
