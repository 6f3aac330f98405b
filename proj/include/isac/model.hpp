// System model: channel generation and the three performance metrics (rate,
// sum-CRB, energy) every solver and benchmark is scored against.
#pragma once

#include <complex>
#include <cstdint>

#include "isac/types.hpp"

namespace isac {

// Communication channel with its cached SVD. sigma holds the positive
// singular values in nonincreasing order; rank_r counts those above
// 1e-9 * sigma(0).
struct CommChannel {
  MatrixXcd h;      // n_rx_comm x m_tx
  MatrixXcd u;      // left singular vectors, n_rx_comm x n_rx_comm
  VectorXd sigma;   // min(n_rx_comm, m_tx) singular values, descending
  MatrixXcd v;      // right singular vectors, m_tx x m_tx
  int rank_r = 0;

  static CommChannel from_matrix(const MatrixXcd& h);

  // Squared singular value of subchannel i, zero beyond sigma's length.
  double gain2(int i) const {
    return i < sigma.size() ? sigma(i) * sigma(i) : 0.0;
  }
};

namespace detail {

// Half-wavelength ULA steering vector, element phase pi * k * sin(angle).
Eigen::VectorXcd steering_vector(int n, double angle_rad);

// The deterministic pieces combined by generate_channel:
// amplitude pathloss gain, rank-1 LoS outer product, i.i.d. CSCG matrix.
struct ChannelComponents {
  double gain;        // 10^(-PL/20), PL = 51.2 + 41.2 log10(d)
  MatrixXcd los;      // b(phi) a(theta)^H at seed-derived angles
  MatrixXcd nlos;     // unit-variance CSCG entries
};
ChannelComponents channel_components(const SystemParams& params,
                                     double distance_m, std::uint64_t seed);

}  // namespace detail

// Rician channel: h = gain * (sqrt(k/(1+k)) los + sqrt(1/(1+k)) nlos).
// Deterministic given the seed.
CommChannel generate_channel(const SystemParams& params, double distance_m,
                             double rician_k, std::uint64_t seed);

// Average achievable rate over the block, (tau/T_max) log2 det(I + HQH^H/s2).
// Throws std::domain_error if q is not Hermitian PSD.
double rate_bps_hz(const SystemParams& params, const MatrixXcd& h,
                   const MatrixXcd& q, double tau_s);
double rate_bps_hz(const SystemParams& params, const CommChannel& channel,
                   const MatrixXcd& q, double tau_s);

// Sum CRB for estimating the target response matrix,
// s_s^2 N_s / (B tau) * tr(q^-1); +inf when q is rank deficient
// (condition number above 1e12).
double crb_trace(const SystemParams& params, const MatrixXcd& q, double tau_s);

// Block energy (tr(q)/eta + P_c) * tau, with the on-off rule: a zero-trace
// covariance draws no non-transmission power. include_static adds
// P_static * T_max.
double energy_j(const SystemParams& params, const MatrixXcd& q, double tau_s,
                bool include_static = false);

// Same energy expressed on per-subchannel powers (diagonal covariance).
double energy_from_power(const SystemParams& params, double total_power_w,
                         double tau_s);

// Per-subchannel power profile diag(V^H Q V), real part.
VectorXd power_allocation(const CommChannel& channel, const MatrixXcd& q);

// Assemble Q = V diag(p) V^H (Hermitian by construction).
MatrixXcd covariance_from_allocation(const CommChannel& channel,
                                     const VectorXd& p);

double dbm_to_watt(double dbm);

}  // namespace isac
