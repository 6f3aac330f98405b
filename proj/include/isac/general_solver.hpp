// General ISAC case: both the rate floor and the CRB ceiling can bind.
//
// The problem is solved in energy coordinates e_i = tau * p_i on the channel
// eigenmodes. For fixed duals (gamma, nu) the per-subchannel optimality
// condition is a cubic with a unique positive root (closed form, Cardano),
// the tail subchannels carry a common sensing-only energy, and the on
// duration solves a scalar monotone equation. The duals are driven by a
// 2-D ellipsoid method with subgradient cuts, then polished to machine
// accuracy, and the primal point is repaired to exact feasibility.
#pragma once

#include "isac/model.hpp"
#include "isac/types.hpp"

namespace isac {

// Ellipsoid iterate over the nonnegative dual pair.
struct DualState {
  double gamma = 0.0;
  double nu = 0.0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  Eigen::Matrix2d shape = Eigen::Matrix2d::Identity();  // SPD
};

// Coefficients of the per-subchannel energy cubic
// a e^3 + b tau e^2 + c e + d tau = 0 and its depressed-form intermediates.
struct CubicCoeffs {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0;
};

struct InnerAllocation {
  VectorXd e;          // M subchannel energies (J)
  double tau_s = 0.0;
  std::vector<CubicCoeffs> cubic;  // head subchannels, filled on request
  bool tau_at_lower = false;
  bool tau_at_upper = false;
  bool non_monotone = false;  // duration equation changed sign unexpectedly
};

// Common energy of the dedicated-sensing subchannels, sqrt(eta gamma s2 Ns/B).
// Throws DegenerateDualError when gamma <= 0 (the tail would carry no energy
// and the CRB would blow up on a rank-deficient channel).
double tail_energy(const SystemParams& params, double gamma);

CubicCoeffs cubic_coefficients(const SystemParams& params,
                               const CommChannel& channel, int i, double gamma,
                               double nu, double tau_s);

// Unique positive root of the subchannel-i energy cubic; Cardano (or the
// trigonometric branch when three real roots exist) with Newton polish and a
// safeguarded-bisection fallback when cancellation spoils the closed form.
// gamma == 0 degenerates to the water-filling allocation.
double head_energy_cardano(const SystemParams& params,
                           const CommChannel& channel, int i, double gamma,
                           double nu, double tau_s);

// Minimizes the Lagrangian over the on-duration: bisects the duration
// optimality condition (re-solving the head energies at every trial duration)
// and clamps to [t_min, t_max] when the root falls outside.
InnerAllocation solve_tau(const SystemParams& params,
                          const CommChannel& channel, double gamma, double nu);

// Subgradient of the dual function at (gamma, nu): constraint slacks at the
// inner minimizer, [crb_lhs - crb_max, rate_floor - rate].
Eigen::Vector2d dual_subgradient(const SystemParams& params,
                                 const CommChannel& channel,
                                 const QosTargets& targets, double gamma,
                                 double nu);

// Full solve: ellipsoid over the duals, dual polish, primal repair,
// covariance reassembly on the channel eigenmodes.
IsacSolution solve_general(const SystemParams& params,
                           const CommChannel& channel,
                           const QosTargets& targets);

// Relative KKT residuals of a solution/dual pair. tau_residual holds the
// interior stationarity defect, or the derivative-sign defect when the
// duration sits at a bound.
struct KktReport {
  double comp_crb = 0.0;
  double comp_rate = 0.0;
  double stationarity_max = 0.0;
  double tau_residual = 0.0;
  bool tau_at_bound = false;
  bool dual_feasible = true;

  double max_residual() const;
};

KktReport verify_kkt(const SystemParams& params, const CommChannel& channel,
                     const QosTargets& targets, const IsacSolution& solution,
                     const DualPair& duals);

}  // namespace isac
