// Independent reference machinery: a grid/dual-scan solver for the same
// energy-minimization problem built on scalar bisection only (no shared code
// with the production solver beyond the metrics), and a signal-level
// Monte-Carlo validator of the CRB expressions.
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "isac/model.hpp"
#include "isac/types.hpp"

namespace isac {

struct SensingScene {
  struct Scatterer {
    std::complex<double> reflection;
    double aod_rad = 0.0;
    double aoa_rad = 0.0;
  };
  std::vector<Scatterer> scatterers;
  MatrixXcd h_s;  // n_rx_sense x m_tx target response
};

// Random extended target: unit-variance CSCG reflection coefficients,
// angles uniform on (-pi/2, pi/2), half-wavelength ULA steering.
SensingScene make_scene(const SystemParams& params, int k_count,
                        std::uint64_t seed);

// Sum of rank-1 steering outer products for a given scatterer list.
MatrixXcd assemble_response(const SystemParams& params,
                            const std::vector<SensingScene::Scatterer>& sc);

struct OracleSolution {
  double energy_j = 0.0;
  VectorXd e;      // per-subchannel energies at the best feasible point
  double tau_s = 0.0;
};

// Reference solve: duration by grid plus golden section; for each duration a
// log-spaced dual grid (grid_density^2 points, two local refinements) with
// per-subchannel energies recovered by bisection on the stationarity
// equations, then a feasibility repair. Intended for small antenna counts.
OracleSolution oracle_solve(const SystemParams& params,
                            const CommChannel& channel,
                            const QosTargets& targets, int grid_density = 200);

struct McReport {
  long trials = 0;
  double empirical_sum_mse = 0.0;   // mean ||Hs_hat - Hs||_F^2 over trials
  double crb_trace_sample = 0.0;    // exact, from the realized X X^H
  double crb_trace_stat = 0.0;      // approximation from Q and the duration
  double sample_cov_dev = 0.0;      // ||XX^H/n - Q||_F / ||Q||_F
  long redraws = 0;                 // signal redraws due to singular X X^H
  double mean_err_fro = 0.0;        // ||mean(Hs_hat) - Hs||_F
  double max_entry_dev_se = 0.0;    // worst entry deviation in SE units
};

// Draws one Gaussian signal block X (tau * B symbols, columns ~ CSCG(0, Q)),
// then runs `trials` noise realizations of the least-squares estimate of the
// target response and compares the empirical error energy against the CRB
// computed both from X X^H and from Q.
McReport mc_validate_crb(const SystemParams& params, const SensingScene& scene,
                         const MatrixXcd& q, double tau_s, long trials,
                         std::uint64_t seed);

}  // namespace isac
