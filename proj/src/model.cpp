#include "isac/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>
#include <sstream>

#include "isac/random.hpp"

namespace isac {

namespace {

constexpr double kRankTol = 1e-9;   // relative singular-value cutoff
// Numerical-rank limit for tr(q^-1): eigenvalues this far below the top are
// indistinguishable from rank deficiency in double precision. Legitimate
// covariances reach ~1e13 spread when sensing-only modes carry sub-picowatt
// power, so the limit sits above that and below the ~1e15 round-off floor.
constexpr double kCondLimit = 1e14;
constexpr double kPsdSlack = 1e-10;

void require_psd(const MatrixXcd& q, const char* who) {
  const double scale = std::fmax(q.cwiseAbs().maxCoeff(), 1.0);
  if ((q - q.adjoint()).cwiseAbs().maxCoeff() > kPsdSlack * scale) {
    throw std::domain_error(std::string(who) + ": covariance not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(q, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdSlack * scale) {
    throw std::domain_error(std::string(who) +
                            ": covariance not positive semidefinite");
  }
}

}  // namespace

void SystemParams::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (m_tx < 1) fail("m_tx", "must be >= 1");
  if (n_rx_sense < m_tx) fail("n_rx_sense", "must be >= m_tx");
  if (n_rx_comm < 1) fail("n_rx_comm", "must be >= 1");
  if (!(bandwidth_hz > 0.0)) fail("bandwidth_hz", "must be > 0");
  if (!(noise_comm_w > 0.0)) fail("noise_comm_w", "must be > 0");
  if (!(noise_sense_w > 0.0)) fail("noise_sense_w", "must be > 0");
  if (!(pa_efficiency > 0.0) || pa_efficiency > 1.0)
    fail("pa_efficiency", "must be in (0, 1]");
  if (p_nontrans_w < 0.0) fail("p_nontrans_w", "must be >= 0");
  if (p_static_w < 0.0) fail("p_static_w", "must be >= 0");
  if (!(t_min_s > 0.0)) fail("t_min_s", "must be > 0");
  if (t_max_s < t_min_s) fail("t_max_s", "must be >= t_min_s");
  if (symbols_min() < 1.0) fail("t_min_s", "t_min_s * bandwidth_hz must be >= 1");
}

const char* to_string(Regime r) {
  switch (r) {
    case Regime::CommDominated: return "CommDominated";
    case Regime::SensingDominated: return "SensingDominated";
    case Regime::General: return "General";
    case Regime::Infeasible: return "Infeasible";
  }
  return "?";
}

double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

CommChannel CommChannel::from_matrix(const MatrixXcd& h) {
  CommChannel c;
  c.h = h;
  Eigen::JacobiSVD<MatrixXcd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  c.u = svd.matrixU();
  c.v = svd.matrixV();
  c.sigma = svd.singularValues();
  c.rank_r = 0;
  if (c.sigma.size() > 0) {
    const double cutoff = kRankTol * c.sigma(0);
    for (int i = 0; i < c.sigma.size(); ++i) {
      if (c.sigma(i) > cutoff && c.sigma(i) > 0.0) ++c.rank_r;
    }
  }
  return c;
}

namespace detail {

Eigen::VectorXcd steering_vector(int n, double angle_rad) {
  Eigen::VectorXcd a(n);
  const double phase = M_PI * std::sin(angle_rad);
  for (int k = 0; k < n; ++k) {
    a(k) = std::polar(1.0, phase * k);
  }
  return a;
}

ChannelComponents channel_components(const SystemParams& params,
                                     double distance_m, std::uint64_t seed) {
  if (!(distance_m > 0.0)) {
    throw std::invalid_argument("distance_m: must be > 0");
  }
  ChannelComponents out;
  const double pathloss_db = 51.2 + 41.2 * std::log10(distance_m);
  out.gain = std::pow(10.0, -pathloss_db / 20.0);

  Rng rng(seed);
  const double aod = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
  const double aoa = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
  out.los = steering_vector(params.n_rx_comm, aoa) *
            steering_vector(params.m_tx, aod).adjoint();

  out.nlos.resize(params.n_rx_comm, params.m_tx);
  for (int i = 0; i < params.n_rx_comm; ++i) {
    for (int j = 0; j < params.m_tx; ++j) {
      out.nlos(i, j) = rng.cgaussian();
    }
  }
  return out;
}

}  // namespace detail

CommChannel generate_channel(const SystemParams& params, double distance_m,
                             double rician_k, std::uint64_t seed) {
  const auto parts = detail::channel_components(params, distance_m, seed);
  const double w_los = std::sqrt(rician_k / (1.0 + rician_k));
  const double w_nlos = std::sqrt(1.0 / (1.0 + rician_k));
  return CommChannel::from_matrix(parts.gain *
                                  (w_los * parts.los + w_nlos * parts.nlos));
}

double rate_bps_hz(const SystemParams& params, const MatrixXcd& h,
                   const MatrixXcd& q, double tau_s) {
  require_psd(q, "rate_bps_hz");
  const int nc = static_cast<int>(h.rows());
  const MatrixXcd a = MatrixXcd::Identity(nc, nc) +
                      (h * q * h.adjoint()) / params.noise_comm_w;
  // a is Hermitian positive definite; log-det via Cholesky.
  Eigen::LLT<MatrixXcd> llt(0.5 * (a + a.adjoint()));
  double log2det = 0.0;
  if (llt.info() == Eigen::Success) {
    for (int i = 0; i < nc; ++i) {
      log2det += 2.0 * std::log2(std::real(llt.matrixLLT()(i, i)));
    }
  } else {
    // Near-singular round-off: fall back to the eigenvalue route.
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(h * q * h.adjoint());
    for (int i = 0; i < nc; ++i) {
      log2det +=
          std::log2(1.0 + std::fmax(0.0, es.eigenvalues()(i)) / params.noise_comm_w);
    }
  }
  return tau_s / params.t_max_s * log2det;
}

double rate_bps_hz(const SystemParams& params, const CommChannel& channel,
                   const MatrixXcd& q, double tau_s) {
  return rate_bps_hz(params, channel.h, q, tau_s);
}

double crb_trace(const SystemParams& params, const MatrixXcd& q, double tau_s) {
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(q, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double ev_max = ev.maxCoeff();
  const double ev_min = ev.minCoeff();
  if (!(ev_max > 0.0) || ev_min <= 0.0 || ev_max / ev_min > kCondLimit) {
    return std::numeric_limits<double>::infinity();
  }
  double tr_inv = 0.0;
  for (int i = 0; i < ev.size(); ++i) tr_inv += 1.0 / ev(i);
  return params.noise_sense_w * params.n_rx_sense /
         (params.bandwidth_hz * tau_s) * tr_inv;
}

double energy_j(const SystemParams& params, const MatrixXcd& q, double tau_s,
                bool include_static) {
  const double tr = std::real(q.trace());
  double e = 0.0;
  if (tr > 0.0) {
    e = (tr / params.pa_efficiency + params.p_nontrans_w) * tau_s;
  }
  if (include_static) e += params.p_static_w * params.t_max_s;
  return e;
}

double energy_from_power(const SystemParams& params, double total_power_w,
                         double tau_s) {
  if (total_power_w <= 0.0) return 0.0;
  return (total_power_w / params.pa_efficiency + params.p_nontrans_w) * tau_s;
}

VectorXd power_allocation(const CommChannel& channel, const MatrixXcd& q) {
  return (channel.v.adjoint() * q * channel.v).diagonal().real();
}

MatrixXcd covariance_from_allocation(const CommChannel& channel,
                                     const VectorXd& p) {
  MatrixXcd q = channel.v * p.asDiagonal() * channel.v.adjoint();
  return 0.5 * (q + MatrixXcd(q.adjoint()));
}

}  // namespace isac
