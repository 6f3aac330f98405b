#include "isac/closed_form.hpp"

#include <cmath>
#include <limits>

#include "isac/scalar.hpp"

namespace isac {

namespace {

constexpr double kLn2 = M_LN2;
constexpr double kDominanceSlack = 1e-9;  // relative slack for regime checks

// Diagonal water-filling allocation at a given level over the r positive
// subchannels; entries clamped at zero.
VectorXd allocation_at_level(const CommChannel& ch, int m, double level,
                             double noise_w) {
  VectorXd s = VectorXd::Zero(m);
  for (int i = 0; i < ch.rank_r; ++i) {
    s(i) = std::fmax(0.0, level - noise_w / ch.gain2(i));
  }
  return s;
}

double rate_of_allocation(const CommChannel& ch, const VectorXd& s,
                          double noise_w) {
  double r = 0.0;
  for (int i = 0; i < ch.rank_r; ++i) {
    r += std::log2(1.0 + ch.gain2(i) * s(i) / noise_w);
  }
  return r;
}

}  // namespace

const char* to_string(CommBranch b) {
  switch (b) {
    case CommBranch::ShortestOn: return "ShortestOn";
    case CommBranch::EeInterior: return "EeInterior";
    case CommBranch::FullBlock: return "FullBlock";
  }
  return "?";
}

EeComResult solve_ee_com(const SystemParams& params, const CommChannel& channel) {
  if (channel.rank_r == 0) {
    throw NoCommChannelError("solve_ee_com: channel has rank zero");
  }
  if (params.p_nontrans_w <= 0.0) {
    throw EeDegenerateError(
        "solve_ee_com: zero non-transmission power, optimal power tends to 0");
  }
  const double eta = params.pa_efficiency;
  const double s2 = params.noise_comm_w;
  const int m = params.m_tx;

  // f(z) = rate(Q(z)) - z * (tr(Q(z))/eta + P_c), strictly decreasing in the
  // efficiency scale z; its unique root is the optimal bits-per-Joule value.
  auto excess = [&](double z) {
    const VectorXd s = allocation_at_level(channel, m, eta / (z * kLn2), s2);
    return rate_of_allocation(channel, s, s2) -
           z * (s.sum() / eta + params.p_nontrans_w);
  };

  double lo = 1e-12, hi = 1e12;
  while (excess(lo) <= 0.0 && lo > 1e-290) lo *= 1e-3;
  while (excess(hi) >= 0.0 && hi < 1e290) hi *= 1e3;
  const double z_star = bisect_root(
      [&](double z) { return -excess(z); }, lo, hi, 1e-15, 300);

  EeComResult out;
  out.allocation = allocation_at_level(channel, m, eta / (z_star * kLn2), s2);
  out.q = covariance_from_allocation(channel, out.allocation);
  out.efficiency = z_star;
  out.upsilon = rate_of_allocation(channel, out.allocation, s2);
  return out;
}

SeComResult solve_se_com(const SystemParams& params, const CommChannel& channel,
                         double rate_floor) {
  const int m = params.m_tx;
  SeComResult out;
  if (rate_floor <= 0.0) {
    out.q = MatrixXcd::Zero(m, m);
    out.allocation = VectorXd::Zero(m);
    out.q_level = std::numeric_limits<double>::infinity();
    return out;
  }
  if (channel.rank_r == 0) {
    throw InfeasibleError("solve_se_com: positive rate floor on rank-zero channel");
  }
  const double s2 = params.noise_comm_w;
  auto rate_at = [&](double level) {
    return rate_of_allocation(channel, allocation_at_level(channel, m, level, s2),
                              s2);
  };

  double lo = s2 / channel.gain2(0);  // rate 0 at this level
  double hi = expand_until([&](double w) { return rate_at(w) >= rate_floor; },
                           2.0 * lo);
  const double level =
      bisect_root([&](double w) { return rate_at(w) - rate_floor; }, lo, hi,
                  1e-15, 300);
  out.allocation = allocation_at_level(channel, m, level, s2);
  out.q = covariance_from_allocation(channel, out.allocation);
  out.q_level = params.pa_efficiency / (level * kLn2);
  return out;
}

CommDominatedSolution solve_comm_dominated(const SystemParams& params,
                                           const CommChannel& channel,
                                           const QosTargets& targets) {
  const double rate_req = targets.rate_bps_hz;
  const int m = params.m_tx;
  CommDominatedSolution out;

  if (rate_req <= 0.0) {
    // Vanishing requirement: no transmission at all, shortest duration.
    out.q = MatrixXcd::Zero(m, m);
    out.allocation = VectorXd::Zero(m);
    out.tau_s = params.t_min_s;
    out.branch = CommBranch::ShortestOn;
    return out;
  }
  if (channel.rank_r == 0) {
    throw InfeasibleError(
        "solve_comm_dominated: positive rate floor on rank-zero channel");
  }
  if (params.p_nontrans_w <= 0.0) {
    // Without circuit power the always-on transmission is optimal; skip the
    // degenerate bits-per-Joule branch.
    const SeComResult se = solve_se_com(params, channel, rate_req);
    out.q = se.q;
    out.allocation = se.allocation;
    out.q_level = se.q_level;
    out.tau_s = params.t_max_s;
    out.branch = CommBranch::FullBlock;
    return out;
  }

  const EeComResult ee = solve_ee_com(params, channel);
  out.ee_rate = ee.upsilon;
  out.xi_star = ee.efficiency / (rate_req * params.t_max_s);
  const double boosted = rate_req * params.t_max_s / params.t_min_s;

  if (ee.upsilon > boosted) {
    const SeComResult se = solve_se_com(params, channel, boosted);
    out.q = se.q;
    out.allocation = se.allocation;
    out.q_level = se.q_level;
    out.tau_s = params.t_min_s;
    out.branch = CommBranch::ShortestOn;
  } else if (ee.upsilon >= rate_req) {
    out.q = ee.q;
    out.allocation = ee.allocation;
    out.tau_s = rate_req * params.t_max_s / ee.upsilon;
    out.branch = CommBranch::EeInterior;
  } else {
    const SeComResult se = solve_se_com(params, channel, rate_req);
    out.q = se.q;
    out.allocation = se.allocation;
    out.q_level = se.q_level;
    out.tau_s = params.t_max_s;
    out.branch = CommBranch::FullBlock;
  }
  return out;
}

IsacSolution solve_sensing_dominated(const SystemParams& params,
                                     const QosTargets& targets) {
  IsacSolution sol;
  const double p = params.noise_sense_w * params.n_rx_sense * params.m_tx /
                   (params.bandwidth_hz * params.t_min_s * targets.crb_max);
  sol.q = p * MatrixXcd::Identity(params.m_tx, params.m_tx);
  sol.allocation = p * VectorXd::Ones(params.m_tx);
  sol.tau_s = params.t_min_s;
  sol.regime = Regime::SensingDominated;
  return sol;
}

void finalize_metrics(const SystemParams& params, const CommChannel& channel,
                      IsacSolution& sol) {
  if (sol.allocation.size() == params.m_tx) {
    // Native eigenmode coordinates: exact even when sensing-only powers sit
    // far below the matrix's double-precision floor.
    double sum_log = 0.0;
    double inv = 0.0;
    bool singular = false;
    double total = 0.0;
    for (int i = 0; i < params.m_tx; ++i) {
      const double p = sol.allocation(i);
      total += p;
      if (i < channel.rank_r) {
        sum_log += std::log2(1.0 + channel.gain2(i) * p / params.noise_comm_w);
      }
      if (p > 0.0) {
        inv += 1.0 / p;
      } else {
        singular = true;
      }
    }
    sol.energy_j = energy_from_power(params, total, sol.tau_s);
    sol.rate_achieved = sol.tau_s / params.t_max_s * sum_log;
    sol.crb_achieved =
        singular ? std::numeric_limits<double>::infinity()
                 : params.noise_sense_w * params.n_rx_sense /
                       (params.bandwidth_hz * sol.tau_s) * inv;
    return;
  }
  sol.energy_j = energy_j(params, sol.q, sol.tau_s);
  sol.rate_achieved = rate_bps_hz(params, channel, sol.q, sol.tau_s);
  sol.crb_achieved = crb_trace(params, sol.q, sol.tau_s);
}

Classified classify_regime(const SystemParams& params,
                           const CommChannel& channel,
                           const QosTargets& targets) {
  Classified out;
  if (channel.rank_r == 0 && targets.rate_bps_hz > 0.0) {
    out.regime = Regime::Infeasible;
    out.solution.q = MatrixXcd::Zero(params.m_tx, params.m_tx);
    out.solution.tau_s = params.t_min_s;
    out.solution.regime = Regime::Infeasible;
    return out;
  }

  out.comm = solve_comm_dominated(params, channel, targets);
  out.comm_valid = true;
  // Exact on the eigenmode powers: zero allocations mean an unbounded CRB.
  double inv = 0.0;
  bool singular = false;
  for (int i = 0; i < params.m_tx; ++i) {
    if (out.comm.allocation(i) > 0.0) {
      inv += 1.0 / out.comm.allocation(i);
    } else {
      singular = true;
    }
  }
  const double crb_com =
      singular ? std::numeric_limits<double>::infinity()
               : params.noise_sense_w * params.n_rx_sense /
                     (params.bandwidth_hz * out.comm.tau_s) * inv;
  if (crb_com <= targets.crb_max * (1.0 + kDominanceSlack)) {
    out.regime = Regime::CommDominated;
    out.solution.q = out.comm.q;
    out.solution.allocation = out.comm.allocation;
    out.solution.tau_s = out.comm.tau_s;
    out.solution.regime = Regime::CommDominated;
    finalize_metrics(params, channel, out.solution);
    return out;
  }

  IsacSolution sen = solve_sensing_dominated(params, targets);
  const double rate_sen = rate_bps_hz(params, channel, sen.q, sen.tau_s);
  if (rate_sen >= targets.rate_bps_hz * (1.0 - kDominanceSlack)) {
    out.regime = Regime::SensingDominated;
    out.solution = sen;
    finalize_metrics(params, channel, out.solution);
    return out;
  }

  out.regime = Regime::General;
  return out;
}

}  // namespace isac
