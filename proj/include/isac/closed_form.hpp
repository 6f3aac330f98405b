// Closed-form regimes: the communications-dominated solver (unconstrained
// bits-per-Joule design, rate-constrained minimum-power design, and the
// three-case rule combining them) and the sensing-dominated isotropic
// shortest-burst solution, plus the classifier deciding which applies.
#pragma once

#include "isac/model.hpp"
#include "isac/types.hpp"

namespace isac {

enum class CommBranch { ShortestOn, EeInterior, FullBlock };

const char* to_string(CommBranch b);

struct CommDominatedSolution {
  MatrixXcd q;
  VectorXd allocation;  // eigenmode powers behind q
  double tau_s = 0.0;
  double ee_rate = 0.0;   // rate achieved by the bits-per-Joule covariance
  double xi_star = 0.0;   // efficiency multiplier (EE branch only)
  double q_level = 0.0;   // minimum-power dual scalar (SE branches only)
  CommBranch branch = CommBranch::FullBlock;
};

struct EeComResult {
  MatrixXcd q;
  VectorXd allocation;
  double efficiency = 0.0;  // xi* * R * T_max, the rate-independent scale
  double upsilon = 0.0;     // rate achieved by q
};

// Unconstrained bits-per-Joule covariance: diagonal water-filling in the
// channel's right-singular basis with level eta/(efficiency * ln 2), the
// efficiency pinned by bisection so rate - efficiency * (tr/eta + P_c) = 0.
// Throws EeDegenerateError when p_nontrans_w == 0, NoCommChannelError when
// the channel has rank zero.
EeComResult solve_ee_com(const SystemParams& params, const CommChannel& channel);

struct SeComResult {
  MatrixXcd q;
  VectorXd allocation;
  double q_level = 0.0;  // eta / (water_level * ln 2)
};

// Minimum-power covariance meeting `rate_floor` with equality (classic
// water-filling; level bisected on the log-det equality).
SeComResult solve_se_com(const SystemParams& params, const CommChannel& channel,
                         double rate_floor);

// Three-case rule: shortest burst at boosted rate / bits-per-Joule point with
// interior duration / full-block minimum power. A zero rate floor yields zero
// transmission at the shortest duration.
CommDominatedSolution solve_comm_dominated(const SystemParams& params,
                                           const CommChannel& channel,
                                           const QosTargets& targets);

// Isotropic shortest-burst solution of the sensing-only problem; the CRB
// ceiling is active by construction.
IsacSolution solve_sensing_dominated(const SystemParams& params,
                                     const QosTargets& targets);

struct Classified {
  Regime regime = Regime::Infeasible;
  IsacSolution solution;        // filled unless regime == General
  CommDominatedSolution comm;   // the comm-dominated candidate, when computed
  bool comm_valid = false;
};

// Checks the comm-dominated candidate's CRB, then the sensing-dominated
// candidate's rate (both with 1e-9 relative slack); General means neither
// shortcut certifies and the dual solver must run.
Classified classify_regime(const SystemParams& params,
                           const CommChannel& channel,
                           const QosTargets& targets);

// Recomputes achieved metrics on a solution from its (q, tau).
void finalize_metrics(const SystemParams& params, const CommChannel& channel,
                      IsacSolution& sol);

}  // namespace isac
