// Core domain types shared by the solvers, benchmarks and the experiment CLI.
//
// Unit contract: everything past config ingestion is linear — seconds, Hz,
// Watts, Joules, bps/Hz. dBm values are converted once at load time.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace isac {

using Eigen::MatrixXcd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when the requested QoS point cannot be met (e.g. positive rate floor
// over a zero-rank channel).
class InfeasibleError : public SolverError {
 public:
  using SolverError::SolverError;
};

// The unconstrained energy-efficiency subproblem degenerates when the
// non-transmission power is zero: optimal power tends to 0 and the on
// duration to the whole block. Callers must route around the EE branch.
class EeDegenerateError : public SolverError {
 public:
  using SolverError::SolverError;
};

class NoCommChannelError : public SolverError {
 public:
  using SolverError::SolverError;
};

// A zero CRB dual over a rank-deficient channel would zero the dedicated
// sensing energies and blow up the CRB; signals an infeasible dual iterate.
class DegenerateDualError : public SolverError {
 public:
  using SolverError::SolverError;
};

// ---------------------------------------------------------------------------
// System description

// Physical and block constants of one ISAC transmission block.
struct SystemParams {
  int m_tx = 1;          // transmit antennas
  int n_rx_sense = 1;    // sensing receive antennas (>= m_tx)
  int n_rx_comm = 1;     // communication-user receive antennas
  double bandwidth_hz = 1.0;
  double noise_comm_w = 1.0;   // linear W
  double noise_sense_w = 1.0;  // linear W
  double pa_efficiency = 1.0;  // (0, 1]
  double p_nontrans_w = 0.0;   // on-off circuit power while transmitting
  double p_static_w = 0.0;     // reporting-only constant
  double t_min_s = 1.0;        // shortest admissible on-duration
  double t_max_s = 1.0;        // block length

  double symbols_min() const { return t_min_s * bandwidth_hz; }
  double symbols_max() const { return t_max_s * bandwidth_hz; }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

// QoS point: rate floor (bps/Hz averaged over the block) and sum-CRB ceiling.
struct QosTargets {
  double rate_bps_hz = 0.0;
  double crb_max = 1.0;
};

enum class Regime { CommDominated, SensingDominated, General, Infeasible };

const char* to_string(Regime r);

struct DualPair {
  double gamma = 0.0;  // CRB constraint multiplier
  double nu = 0.0;     // rate constraint multiplier
};

// Solver bookkeeping surfaced through the CLI's --verbose columns.
struct SolverDiagnostics {
  int iterations = 0;
  double duality_gap = 0.0;     // (primal energy - best dual value) / dual
  double kkt_residual_max = 0.0;
  double repair_factor = 1.0;   // smallest >=1 scaling restoring feasibility
  bool converged = true;
  bool tau_at_lower = false;
  bool tau_at_upper = false;
  bool tau_non_monotone = false;  // duration optimality LHS changed sign twice
};

// Output of any solve: covariance, on-duration, achieved metrics.
//
// `allocation` holds the per-subchannel powers on the channel eigenmodes
// (the solution's native coordinates). Achieved metrics are computed from it
// when present: dedicated-sensing powers can sit many orders of magnitude
// below the data powers, beyond what the assembled matrix can represent in
// double precision.
struct IsacSolution {
  MatrixXcd q;          // transmit covariance, Hermitian PSD (W)
  VectorXd allocation;  // eigenmode powers (W), empty when not applicable
  double tau_s = 0.0;
  double energy_j = 0.0;
  double rate_achieved = 0.0;
  double crb_achieved = 0.0;
  Regime regime = Regime::Infeasible;
  DualPair duals;       // meaningful when regime == General
  SolverDiagnostics diag;
};

}  // namespace isac
