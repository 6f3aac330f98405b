#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <limits>

#include "isac/model.hpp"
#include "isac/random.hpp"

using namespace isac;

namespace {

SystemParams unit_params(int m, int ns = 0, int nc = 1) {
  SystemParams p;
  p.m_tx = m;
  p.n_rx_sense = ns > 0 ? ns : m;
  p.n_rx_comm = nc;
  p.bandwidth_hz = 1.0;
  p.noise_comm_w = 1.0;
  p.noise_sense_w = 1.0;
  p.pa_efficiency = 1.0;
  p.p_nontrans_w = 1.0;
  p.t_min_s = 1.0;
  p.t_max_s = 1.0;
  return p;
}

MatrixXcd random_psd(int n, Rng& rng, double scale = 1.0) {
  MatrixXcd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.cgaussian();
  return scale * (a * a.adjoint());
}

MatrixXcd random_matrix(int rows, int cols, Rng& rng) {
  MatrixXcd a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = rng.cgaussian();
  return a;
}

}  // namespace

TEST_CASE("params validation flags each broken field") {
  SystemParams p = unit_params(2, 2, 1);
  CHECK_NOTHROW(p.validate());
  p.n_rx_sense = 1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = unit_params(2, 2, 1);
  p.pa_efficiency = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.pa_efficiency = 1.0;  // ideal PA boundary is allowed
  CHECK_NOTHROW(p.validate());
  p.t_max_s = 0.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = unit_params(2, 2, 1);
  p.t_min_s = 0.25;  // fewer than one symbol
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("pathloss at 100 m is 133.6 dB") {
  SystemParams p = unit_params(2, 2, 2);
  const auto parts = detail::channel_components(p, 100.0, 7);
  CHECK(parts.gain ==
        doctest::Approx(std::pow(10.0, -133.6 / 20.0)).epsilon(1e-12));
  // LoS is a rank-1 product of unit-modulus steering entries.
  for (int i = 0; i < parts.los.rows(); ++i)
    for (int j = 0; j < parts.los.cols(); ++j)
      CHECK(std::abs(parts.los(i, j)) == doctest::Approx(1.0));
  Eigen::JacobiSVD<MatrixXcd> svd(parts.los);
  CHECK(svd.singularValues()(1) < 1e-12 * svd.singularValues()(0));
}

TEST_CASE("channel combines LoS and Rayleigh parts per the Rician factor") {
  SystemParams p = unit_params(3, 3, 2);
  for (double k : {0.0, 1.0, 5.0}) {
    const auto parts = detail::channel_components(p, 50.0, 99);
    const MatrixXcd expect =
        parts.gain * (std::sqrt(k / (1.0 + k)) * parts.los +
                      std::sqrt(1.0 / (1.0 + k)) * parts.nlos);
    const CommChannel ch = generate_channel(p, 50.0, k, 99);
    CHECK((ch.h - expect).norm() == 0.0);  // identical draws, identical result
  }
}

TEST_CASE("same seed gives a bit-identical channel") {
  SystemParams p = unit_params(4, 4, 3);
  const CommChannel a = generate_channel(p, 120.0, 1.0, 1234);
  const CommChannel b = generate_channel(p, 120.0, 1.0, 1234);
  REQUIRE(a.h.rows() == b.h.rows());
  CHECK((a.h - b.h).cwiseAbs().maxCoeff() == 0.0);
  const CommChannel c = generate_channel(p, 120.0, 1.0, 1235);
  CHECK((a.h - c.h).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("channel SVD invariants") {
  SystemParams p = unit_params(5, 5, 3);
  const CommChannel ch = generate_channel(p, 80.0, 1.0, 42);
  const int nc = p.n_rx_comm, m = p.m_tx;
  CHECK((ch.u.adjoint() * ch.u - MatrixXcd::Identity(nc, nc))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  CHECK((ch.v.adjoint() * ch.v - MatrixXcd::Identity(m, m))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  MatrixXcd sigma = MatrixXcd::Zero(nc, m);
  for (int i = 0; i < ch.sigma.size(); ++i) sigma(i, i) = ch.sigma(i);
  CHECK((ch.u * sigma * ch.v.adjoint() - ch.h).norm() < 1e-10 * ch.h.norm());
  for (int i = 1; i < ch.sigma.size(); ++i) CHECK(ch.sigma(i) <= ch.sigma(i - 1));
  CHECK(ch.rank_r == 3);  // min(nc, m) for a generic realization
}

TEST_CASE("rate: zero covariance, scalar case, eigenvalue oracle") {
  SystemParams p = unit_params(1, 1, 1);
  CommChannel ch = CommChannel::from_matrix(MatrixXcd::Ones(1, 1));
  CHECK(rate_bps_hz(p, ch, MatrixXcd::Zero(1, 1), 1.0) == 0.0);
  CHECK(rate_bps_hz(p, ch, MatrixXcd::Ones(1, 1), 1.0) == doctest::Approx(1.0));

  // 2x2 instance against a by-hand eigenvalue computation of HQH^H.
  Rng rng(5);
  SystemParams p2 = unit_params(2, 2, 2);
  p2.t_max_s = 2.0;
  p2.t_min_s = 1.0;
  p2.noise_comm_w = 0.7;
  const MatrixXcd h = random_matrix(2, 2, rng);
  const MatrixXcd q = random_psd(2, rng);
  const MatrixXcd a = h * q * h.adjoint();
  const double tr = std::real(a.trace());
  const double det = std::real(a.determinant());
  const double disc = std::sqrt(std::fmax(0.0, tr * tr / 4.0 - det));
  const double w1 = tr / 2.0 + disc, w2 = tr / 2.0 - disc;
  const double expect =
      (1.7 / 2.0) * (std::log2(1.0 + w1 / 0.7) + std::log2(1.0 + w2 / 0.7));
  CHECK(rate_bps_hz(p2, CommChannel::from_matrix(h), q, 1.7) ==
        doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("rate rejects a non-PSD covariance") {
  SystemParams p = unit_params(2, 2, 2);
  const CommChannel ch = generate_channel(p, 10.0, 1.0, 3);
  MatrixXcd q(2, 2);
  q << 1.0, 0.0, 0.0, -0.5;
  CHECK_THROWS_AS(rate_bps_hz(p, ch, q, 1.0), std::domain_error);
  q(0, 1) = std::complex<double>(0, 1);  // not Hermitian
  q(1, 1) = 1.0;
  CHECK_THROWS_AS(rate_bps_hz(p, ch, q, 1.0), std::domain_error);
}

TEST_CASE("rate is monotone under the PSD order") {
  Rng rng(17);
  SystemParams p = unit_params(3, 3, 2);
  const CommChannel ch = generate_channel(p, 60.0, 1.0, 8);
  for (int trial = 0; trial < 30; ++trial) {
    const MatrixXcd q = random_psd(3, rng, 1e12);
    const MatrixXcd bump = random_psd(3, rng, 3e11);
    CHECK(rate_bps_hz(p, ch, MatrixXcd(q + bump), 1.0) >=
          rate_bps_hz(p, ch, q, 1.0) - 1e-10);
  }
}

TEST_CASE("rate agrees between the raw channel and its SVD reconstruction") {
  Rng rng(23);
  SystemParams p = unit_params(4, 4, 3);
  const CommChannel ch = generate_channel(p, 90.0, 1.0, 77);
  MatrixXcd sigma = MatrixXcd::Zero(3, 4);
  for (int i = 0; i < ch.sigma.size(); ++i) sigma(i, i) = ch.sigma(i);
  const MatrixXcd rebuilt = ch.u * sigma * ch.v.adjoint();
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXcd q = random_psd(4, rng, 1e10);  // lift above pathloss scale
    const double r1 = rate_bps_hz(p, ch.h, q, 1.0);
    const double r2 = rate_bps_hz(p, rebuilt, q, 1.0);
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-9));
  }
}

TEST_CASE("crb: identity, singular, scaled identity") {
  SystemParams p = unit_params(2, 1, 1);  // metric fixture, Ns=1 by intent
  p.n_rx_sense = 1;
  CHECK(crb_trace(p, MatrixXcd::Identity(2, 2), 1.0) == doctest::Approx(2.0));

  MatrixXcd singular(2, 2);
  singular << 1.0, 0.0, 0.0, 0.0;
  CHECK(crb_trace(p, singular, 1.0) == std::numeric_limits<double>::infinity());

  SystemParams p2 = unit_params(3, 4, 1);
  p2.noise_sense_w = 2.0;
  p2.bandwidth_hz = 5.0;
  const double c = 0.8, tau = 1.2;
  CHECK(crb_trace(p2, c * MatrixXcd::Identity(3, 3), tau) ==
        doctest::Approx(2.0 * 4 * 3 / (5.0 * tau * c)).epsilon(1e-12));
}

TEST_CASE("crb scales as 1/c when the covariance is scaled by c") {
  Rng rng(31);
  SystemParams p = unit_params(3, 5, 1);
  const MatrixXcd q = random_psd(3, rng);
  const double base = crb_trace(p, q, 1.0);
  for (double c : {0.25, 2.0, 10.0}) {
    CHECK(crb_trace(p, MatrixXcd(c * q), 1.0) ==
          doctest::Approx(base / c).epsilon(1e-10));
  }
}

TEST_CASE("energy: arithmetic, on-off rule, static term") {
  SystemParams p = unit_params(2, 2, 1);
  p.pa_efficiency = 0.5;
  p.p_nontrans_w = 1.0;
  p.p_static_w = 1.0;
  p.t_max_s = 2.0;
  const MatrixXcd q = 0.5 * MatrixXcd::Identity(2, 2);  // trace 1
  CHECK(energy_j(p, q, 2.0) == doctest::Approx(6.0));
  CHECK(energy_j(p, MatrixXcd::Zero(2, 2), 2.0) == 0.0);
  CHECK(energy_j(p, MatrixXcd::Zero(2, 2), 2.0, true) == doctest::Approx(2.0));
  CHECK(energy_j(p, q, 2.0, true) == doctest::Approx(8.0));
}

TEST_CASE("energy is linear in duration and in trace separately") {
  Rng rng(41);
  SystemParams p = unit_params(3, 3, 1);
  p.pa_efficiency = 0.38;
  p.p_nontrans_w = 4.0;
  p.t_max_s = 10.0;
  const MatrixXcd q = random_psd(3, rng);
  const double e1 = energy_j(p, q, 2.0);
  CHECK(energy_j(p, q, 6.0) == doctest::Approx(3.0 * e1).epsilon(1e-12));
  const double pa_part = std::real(q.trace()) / p.pa_efficiency * 2.0;
  CHECK(energy_j(p, MatrixXcd(2.0 * q), 2.0) ==
        doctest::Approx(e1 + pa_part).epsilon(1e-12));
}

TEST_CASE("allocation helpers round-trip") {
  SystemParams p = unit_params(4, 4, 4);
  const CommChannel ch = generate_channel(p, 70.0, 1.0, 11);
  VectorXd alloc(4);
  alloc << 4.0, 3.0, 2.0, 1.0;
  const MatrixXcd q = covariance_from_allocation(ch, alloc);
  CHECK((power_allocation(ch, q) - alloc).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((q - q.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dbm conversion") {
  CHECK(dbm_to_watt(-103.0) == doctest::Approx(std::pow(10.0, -13.3)));
  CHECK(dbm_to_watt(30.0) == doctest::Approx(1.0));
}
