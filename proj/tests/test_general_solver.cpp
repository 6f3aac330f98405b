#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "isac/general_solver.hpp"
#include "isac/random.hpp"
#include "isac/scalar.hpp"
#include "isac/solve.hpp"

using namespace isac;

namespace {

constexpr double kLn2 = M_LN2;

SystemParams unit_params(int m, int nc, double pc = 1.0) {
  SystemParams p;
  p.m_tx = m;
  p.n_rx_sense = m;
  p.n_rx_comm = nc;
  p.bandwidth_hz = 1.0;
  p.noise_comm_w = 1.0;
  p.noise_sense_w = 1.0;
  p.pa_efficiency = 0.5;
  p.p_nontrans_w = pc;
  p.t_min_s = 1.0;
  p.t_max_s = 2.5;
  return p;
}

CommChannel random_channel(int nc, int m, Rng& rng) {
  MatrixXcd h(nc, m);
  for (int i = 0; i < nc; ++i)
    for (int j = 0; j < m; ++j) h(i, j) = rng.cgaussian();
  return CommChannel::from_matrix(h);
}

double sense_coef(const SystemParams& p) {
  return p.noise_sense_w * p.n_rx_sense / p.bandwidth_hz;
}

// Stationarity of the per-subchannel energy (zero at the cubic's root).
double stationarity(const SystemParams& p, const CommChannel& c, int i,
                    double gamma, double nu, double tau, double e) {
  const double lam2 = c.gain2(i);
  return 1.0 / p.pa_efficiency - gamma * sense_coef(p) / (e * e) -
         nu / (kLn2 * p.t_max_s) * (lam2 / p.noise_comm_w) /
             (1.0 + lam2 * e / (p.noise_comm_w * tau));
}

// Duration-condition LHS rebuilt from public pieces.
double duration_lhs(const SystemParams& p, const CommChannel& c, double gamma,
                    double nu, double tau) {
  double sum_log = 0.0, sum_inv = 0.0;
  for (int i = 0; i < c.rank_r; ++i) {
    const double e = head_energy_cardano(p, c, i, gamma, nu, tau);
    const double x = c.gain2(i) * e / (p.noise_comm_w * tau);
    sum_log += std::log2(1.0 + x);
    sum_inv += 1.0 / (1.0 + x);
  }
  return p.p_nontrans_w -
         nu / p.t_max_s * (sum_log + (sum_inv - c.rank_r) / kLn2);
}

// Dual function value rebuilt from public pieces.
double dual_value(const SystemParams& p, const CommChannel& c,
                  const QosTargets& t, double gamma, double nu) {
  const InnerAllocation a = solve_tau(p, c, gamma, nu);
  double rate = 0.0;
  for (int i = 0; i < c.rank_r; ++i) {
    rate += std::log2(1.0 + c.gain2(i) * a.e(i) / (p.noise_comm_w * a.tau_s));
  }
  rate *= a.tau_s / p.t_max_s;
  double val = a.e.sum() / p.pa_efficiency + p.p_nontrans_w * a.tau_s +
               nu * (t.rate_bps_hz - rate);
  if (gamma > 0.0) {
    double inv = 0.0;
    for (int i = 0; i < a.e.size(); ++i) inv += 1.0 / a.e(i);
    val += gamma * (sense_coef(p) * inv - t.crb_max);
  }
  return val;
}

// Draws QoS targets until the classifier reports the general regime.
QosTargets general_targets(const SystemParams& p, const CommChannel& c,
                           Rng& rng) {
  for (int attempt = 0; attempt < 500; ++attempt) {
    QosTargets t;
    t.rate_bps_hz = rng.uniform(0.5, 4.0 * c.rank_r);
    t.crb_max = std::pow(10.0, rng.uniform(-1.5, 1.0));
    if (classify_regime(p, c, t).regime == Regime::General) return t;
  }
  FAIL("could not construct a general-regime instance");
  return {};
}

}  // namespace

TEST_CASE("dedicated-sensing energy: value, scaling, stationarity") {
  SystemParams p = unit_params(2, 2);
  p.pa_efficiency = 1.0;
  p.n_rx_sense = 1;
  CHECK(tail_energy(p, 1.0) == doctest::Approx(1.0));
  CHECK(tail_energy(p, 4.0) == doctest::Approx(2.0));
  const double e = tail_energy(p, 2.7);
  CHECK(std::fabs(1.0 / p.pa_efficiency - 2.7 * sense_coef(p) / (e * e)) <
        1e-12);
  CHECK_THROWS_AS(tail_energy(p, 0.0), DegenerateDualError);
}

TEST_CASE("head energy with zero CRB dual is water-filling") {
  SystemParams p = unit_params(2, 2);
  Rng rng(3);
  const CommChannel ch = random_channel(2, 2, rng);
  for (double nu : {0.3, 1.0, 6.0}) {
    for (double tau : {1.0, 1.9, 2.5}) {
      for (int i = 0; i < 2; ++i) {
        const double expect =
            std::fmax(0.0, p.pa_efficiency * nu / (kLn2 * p.t_max_s) -
                               p.noise_comm_w / ch.gain2(i));
        CHECK(head_energy_cardano(p, ch, i, 0.0, nu, tau) ==
              doctest::Approx(tau * expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("head energy with zero rate dual equals the sensing energy") {
  SystemParams p = unit_params(3, 3);
  Rng rng(4);
  const CommChannel ch = random_channel(3, 3, rng);
  for (double gamma : {0.2, 1.0, 13.0}) {
    const double expect = tail_energy(p, gamma);
    for (int i = 0; i < 3; ++i) {
      CHECK(head_energy_cardano(p, ch, i, gamma, 0.0, 1.7) ==
            doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("Cardano root matches an independent bisection of the cubic") {
  Rng rng(7);
  SystemParams p = unit_params(3, 3);
  const CommChannel ch = random_channel(3, 3, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const double gamma = std::pow(10.0, rng.uniform(-4.0, 4.0));
    const double nu = std::pow(10.0, rng.uniform(-4.0, 4.0));
    const double tau = rng.uniform(p.t_min_s, p.t_max_s);
    const int i = static_cast<int>(rng.raw() % 3);

    const double e = head_energy_cardano(p, ch, i, gamma, nu, tau);
    const CubicCoeffs k = cubic_coefficients(p, ch, i, gamma, nu, tau);
    auto cubic = [&](double x) {
      return k.a * x * x * x + k.b * tau * x * x + k.c * x + k.d * tau;
    };
    const double hi = expand_until([&](double x) { return cubic(x) > 0.0; },
                                   1.0, 2.0, 1e12);
    const double root = bisect_root(cubic, 0.0, hi, 1e-13, 300);
    CHECK(e == doctest::Approx(root).epsilon(1e-9));
    CHECK(std::fabs(stationarity(p, ch, i, gamma, nu, tau, e)) <
          1e-9 * (1.0 / p.pa_efficiency));
  }
}

TEST_CASE("duration: zero rate dual pins the shortest burst") {
  SystemParams p = unit_params(2, 2, 2.0);
  Rng rng(9);
  const CommChannel ch = random_channel(2, 2, rng);
  const InnerAllocation a = solve_tau(p, ch, 1.3, 0.0);
  CHECK(a.tau_s == p.t_min_s);
  CHECK(a.tau_at_lower);
}

TEST_CASE("duration: zero circuit power pins the whole block") {
  SystemParams p = unit_params(2, 2, 0.0);
  Rng rng(10);
  const CommChannel ch = random_channel(2, 2, rng);
  const InnerAllocation a = solve_tau(p, ch, 0.9, 2.0);
  CHECK(a.tau_s == p.t_max_s);
  CHECK(a.tau_at_upper);
}

TEST_CASE("duration root agrees with a dense scan of the condition") {
  Rng rng(11);
  SystemParams p = unit_params(3, 3, 1.5);
  const CommChannel ch = random_channel(3, 3, rng);
  for (int trial = 0; trial < 40; ++trial) {
    const double gamma = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const double nu = std::pow(10.0, rng.uniform(-2.0, 3.0));
    const InnerAllocation a = solve_tau(p, ch, gamma, nu);

    auto lhs = [&](double tau) { return duration_lhs(p, ch, gamma, nu, tau); };
    if (a.tau_at_lower) {
      CHECK(lhs(p.t_min_s) >= -1e-8 * p.p_nontrans_w);
    } else if (a.tau_at_upper) {
      CHECK(lhs(p.t_max_s) <= 1e-8 * p.p_nontrans_w);
    } else {
      CHECK(std::fabs(lhs(a.tau_s)) < 1e-8 * p.p_nontrans_w);
      // The sign-change bracket from a dense grid must contain the root.
      const int n = 200;
      double lo = p.t_min_s, hi = p.t_max_s;
      for (int k = 0; k < n; ++k) {
        const double t0 = p.t_min_s + (p.t_max_s - p.t_min_s) * k / (n - 1);
        if (lhs(t0) <= 0.0) lo = t0;
      }
      for (int k = n - 1; k >= 0; --k) {
        const double t0 = p.t_min_s + (p.t_max_s - p.t_min_s) * k / (n - 1);
        if (lhs(t0) >= 0.0) hi = t0;
      }
      const double cell = (p.t_max_s - p.t_min_s) / (n - 1);
      CHECK(a.tau_s >= lo - cell);
      CHECK(a.tau_s <= hi + cell);
    }
  }
}

TEST_CASE("subgradient components match finite differences of the dual") {
  Rng rng(13);
  SystemParams p = unit_params(3, 2, 1.2);
  const CommChannel ch = random_channel(2, 3, rng);
  const QosTargets t{2.0, 0.8};
  for (int trial = 0; trial < 25; ++trial) {
    const double gamma = std::pow(10.0, rng.uniform(-2.0, 2.0));
    const double nu = std::pow(10.0, rng.uniform(-1.5, 2.0));
    const Eigen::Vector2d g = dual_subgradient(p, ch, t, gamma, nu);

    const double hg = 1e-5 * gamma;
    const double fd_g = (dual_value(p, ch, t, gamma + hg, nu) -
                         dual_value(p, ch, t, gamma - hg, nu)) /
                        (2.0 * hg);
    const double hn = 1e-5 * nu;
    const double fd_n = (dual_value(p, ch, t, gamma, nu + hn) -
                         dual_value(p, ch, t, gamma, nu - hn)) /
                        (2.0 * hn);
    CHECK(g(0) == doctest::Approx(fd_g).epsilon(1e-4));
    CHECK(g(1) == doctest::Approx(fd_n).epsilon(1e-4));
  }
}

TEST_CASE("subgradient CRB component shrinks when energies grow") {
  SystemParams p = unit_params(2, 2);
  Rng rng(15);
  const CommChannel ch = random_channel(2, 2, rng);
  const InnerAllocation a = solve_tau(p, ch, 1.0, 1.0);
  double inv1 = 0.0, inv2 = 0.0;
  for (int i = 0; i < 2; ++i) {
    inv1 += 1.0 / a.e(i);
    inv2 += 1.0 / (2.0 * a.e(i));
  }
  CHECK(sense_coef(p) * inv2 < sense_coef(p) * inv1);
}

TEST_CASE("general solve: both constraints end up active") {
  Rng rng(21);
  for (int inst = 0; inst < 10; ++inst) {
    SystemParams p = unit_params(3, 3, 1.0 + rng.uniform());
    const CommChannel ch = random_channel(3, 3, rng);
    const QosTargets t = general_targets(p, ch, rng);
    const IsacSolution sol = solve_general(p, ch, t);
    CHECK(sol.rate_achieved == doctest::Approx(t.rate_bps_hz).epsilon(1e-6));
    CHECK(sol.crb_achieved == doctest::Approx(t.crb_max).epsilon(1e-6));
    CHECK(sol.duals.gamma > 0.0);
    CHECK(sol.duals.nu > 0.0);
    // Complementary slackness: at the optimal duals each subgradient
    // component is (numerically) nonpositive.
    const Eigen::Vector2d g =
        dual_subgradient(p, ch, t, sol.duals.gamma, sol.duals.nu);
    CHECK(g(0) <= 1e-6 * t.crb_max);
    CHECK(g(1) <= 1e-6 * std::fmax(t.rate_bps_hz, 1.0));
  }
}

TEST_CASE("general solve: allocation is ordered and strictly positive") {
  Rng rng(22);
  for (int inst = 0; inst < 15; ++inst) {
    const int m = 2 + static_cast<int>(rng.raw() % 3);
    const int nc = 1 + static_cast<int>(rng.raw() % m);
    SystemParams p = unit_params(m, nc, 0.5 + rng.uniform());
    const CommChannel ch = random_channel(nc, m, rng);
    const QosTargets t = general_targets(p, ch, rng);
    const IsacSolution sol = solve_general(p, ch, t);

    const VectorXd alloc = power_allocation(ch, sol.q);
    for (int i = 0; i + 1 < m; ++i) CHECK(alloc(i) >= alloc(i + 1) - 1e-9);
    for (int i = ch.rank_r; i + 1 < m; ++i) {
      CHECK(alloc(i) == doctest::Approx(alloc(i + 1)).epsilon(1e-12));
    }
    CHECK(alloc(m - 1) > 0.0);
  }
}

TEST_CASE("general solve: covariance is diagonal on the channel eigenmodes") {
  Rng rng(23);
  SystemParams p = unit_params(4, 3, 1.0);
  const CommChannel ch = random_channel(3, 4, rng);
  const QosTargets t = general_targets(p, ch, rng);
  const IsacSolution sol = solve_general(p, ch, t);
  const MatrixXcd rotated = ch.v.adjoint() * sol.q * ch.v;
  const double trace = std::real(rotated.trace());
  double offdiag = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) offdiag = std::fmax(offdiag, std::abs(rotated(i, j)));
  CHECK(offdiag < 1e-9 * trace);
  for (int i = 0; i < 4; ++i) CHECK(std::real(rotated(i, i)) > 0.0);
}

TEST_CASE("energy coordinates agree with covariance metrics") {
  // Objective and both constraint values computed on (e, tau) must equal the
  // matrix metrics on the reconstructed covariance.
  Rng rng(25);
  SystemParams p = unit_params(3, 3, 0.9);
  const CommChannel ch = random_channel(3, 3, rng);
  for (int trial = 0; trial < 20; ++trial) {
    VectorXd e(3);
    for (int i = 0; i < 3; ++i) e(i) = std::pow(10.0, rng.uniform(-2.0, 2.0));
    const double tau = rng.uniform(p.t_min_s, p.t_max_s);
    const MatrixXcd q = covariance_from_allocation(ch, (e / tau).eval());

    double rate_e = 0.0, inv_e = 0.0;
    for (int i = 0; i < 3; ++i) {
      rate_e += std::log2(1.0 + ch.gain2(i) * e(i) / (p.noise_comm_w * tau));
      inv_e += 1.0 / e(i);
    }
    rate_e *= tau / p.t_max_s;
    const double crb_e = sense_coef(p) * inv_e;
    const double energy_e = e.sum() / p.pa_efficiency + p.p_nontrans_w * tau;

    CHECK(rate_bps_hz(p, ch, q, tau) == doctest::Approx(rate_e).epsilon(1e-10));
    CHECK(crb_trace(p, q, tau) == doctest::Approx(crb_e).epsilon(1e-10));
    CHECK(energy_j(p, q, tau) == doctest::Approx(energy_e).epsilon(1e-10));
  }
}

TEST_CASE("general solve collapses to the comm-dominated solution") {
  Rng rng(27);
  SystemParams p = unit_params(3, 3, 1.4);
  const CommChannel ch = random_channel(3, 3, rng);
  // Rate floor high enough that water-filling loads every subchannel (a
  // zero allocation would blow up the CRB and force the general regime).
  const QosTargets t{12.0, 1e9};
  REQUIRE(classify_regime(p, ch, t).regime == Regime::CommDominated);
  const IsacSolution gen = solve_general(p, ch, t);
  const CommDominatedSolution comm = solve_comm_dominated(p, ch, t);
  CHECK(gen.duals.gamma < 1e-8);
  CHECK(gen.energy_j ==
        doctest::Approx(energy_j(p, comm.q, comm.tau_s)).epsilon(1e-5));
  const VectorXd a_gen = power_allocation(ch, gen.q);
  const VectorXd a_com = power_allocation(ch, comm.q);
  for (int i = 0; i < 3; ++i) {
    if (a_com(i) > 1e-12) {
      CHECK(a_gen(i) == doctest::Approx(a_com(i)).epsilon(1e-5));
    }
  }
}

TEST_CASE("general solve collapses to the sensing closed form") {
  Rng rng(28);
  SystemParams p = unit_params(3, 2, 1.1);
  const CommChannel ch = random_channel(2, 3, rng);
  const QosTargets t{0.05, 0.4};  // far below the sensing point's rate
  REQUIRE(classify_regime(p, ch, t).regime == Regime::SensingDominated);
  const IsacSolution gen = solve_general(p, ch, t);
  const IsacSolution sen = solve_sensing_dominated(p, t);
  CHECK(gen.tau_s == p.t_min_s);
  CHECK(gen.duals.nu == 0.0);
  CHECK((gen.q - sen.q).cwiseAbs().maxCoeff() <
        1e-10 * std::real(sen.q.trace()));
}

TEST_CASE("general solve: zero circuit power uses the whole block") {
  Rng rng(29);
  SystemParams p = unit_params(3, 3, 0.0);
  const CommChannel ch = random_channel(3, 3, rng);
  const QosTargets t = general_targets(p, ch, rng);
  const IsacSolution sol = solve_general(p, ch, t);
  CHECK(sol.tau_s == p.t_max_s);
}

TEST_CASE("high-rate full-rank allocations approach isotropic") {
  Rng rng(31);
  SystemParams p = unit_params(3, 3, 1.0);
  const CommChannel ch = random_channel(3, 3, rng);
  const double reference = solve_ee_com(p, ch).upsilon;
  const QosTargets t{10.0 * reference, 1e6};
  const IsacSolution sol = solve_general(p, ch, t);
  const VectorXd alloc = power_allocation(ch, sol.q);
  const double mean = alloc.mean();
  CHECK((alloc.array() - mean).abs().maxCoeff() / mean < 0.05);
}

TEST_CASE("kkt report: converged solves sit below 1e-6") {
  Rng rng(33);
  for (int inst = 0; inst < 10; ++inst) {
    SystemParams p = unit_params(3, 3, 0.8 + rng.uniform());
    const CommChannel ch = random_channel(3, 3, rng);
    const QosTargets t = general_targets(p, ch, rng);
    const IsacSolution sol = solve_general(p, ch, t);
    const KktReport rep = verify_kkt(p, ch, t, sol, sol.duals);
    CHECK(rep.max_residual() < 1e-6);
    CHECK(rep.dual_feasible);
  }
}

TEST_CASE("kkt report flags a violated point") {
  Rng rng(35);
  SystemParams p = unit_params(2, 2, 1.0);
  const CommChannel ch = random_channel(2, 2, rng);
  const QosTargets t{1.5, 0.7};
  IsacSolution bogus;
  bogus.q = 0.3 * MatrixXcd::Identity(2, 2);
  bogus.tau_s = 1.7;
  const KktReport rep = verify_kkt(p, ch, t, bogus, {0.5, 0.5});
  CHECK(rep.max_residual() > 1e-3);
}

TEST_CASE("stress: corners of the parameter space stay feasible and optimal") {
  Rng rng(4242);
  int general_count = 0;
  for (int inst = 0; inst < 600; ++inst) {
    SystemParams p;
    p.m_tx = 1 + static_cast<int>(rng.raw() % 6);
    p.n_rx_sense = p.m_tx + static_cast<int>(rng.raw() % 4);
    p.n_rx_comm = 1 + static_cast<int>(rng.raw() % 7);
    p.bandwidth_hz = std::pow(10.0, rng.uniform(0.0, 7.0));
    p.noise_comm_w = std::pow(10.0, rng.uniform(-14.0, 0.0));
    p.noise_sense_w = std::pow(10.0, rng.uniform(-14.0, 1.0));
    p.pa_efficiency = rng.uniform(0.05, 1.0);
    p.p_nontrans_w = (inst % 7 == 0) ? 0.0 : std::pow(10.0, rng.uniform(-2.0, 2.0));
    p.t_min_s = std::fmax(1.0 / p.bandwidth_hz, std::pow(10.0, rng.uniform(-5.0, 0.0)));
    p.t_max_s = (inst % 5 == 0) ? p.t_min_s  // degenerate duration window
                                : p.t_min_s * rng.uniform(1.0, 4.0);

    const CommChannel ch =
        generate_channel(p, rng.uniform(1.0, 300.0),
                         (inst % 4 == 0) ? 0.0 : rng.uniform(0.0, 30.0), inst);
    QosTargets t;
    // Rate floors up to deep saturation, ceilings across twelve decades of
    // the per-instance CRB scale.
    t.rate_bps_hz = (inst % 11 == 0) ? 0.0 : rng.uniform(0.1, 12.0 * ch.rank_r);
    const double crb_scale =
        p.noise_sense_w * p.n_rx_sense / (p.bandwidth_hz * p.t_min_s);
    t.crb_max = crb_scale * std::pow(10.0, rng.uniform(-2.0, 10.0));

    const IsacSolution sol = solve(p, ch, t);
    REQUIRE(sol.regime != Regime::Infeasible);
    CHECK(sol.tau_s >= p.t_min_s * (1.0 - 1e-12));
    CHECK(sol.tau_s <= p.t_max_s * (1.0 + 1e-12));
    CHECK(sol.rate_achieved >= t.rate_bps_hz * (1.0 - 1e-8));
    CHECK(sol.crb_achieved <= t.crb_max * (1.0 + 1e-8));
    CHECK((sol.q - sol.q.adjoint()).cwiseAbs().maxCoeff() <=
          1e-10 * std::fmax(1.0, sol.q.cwiseAbs().maxCoeff()));

    if (sol.regime == Regime::General) {
      ++general_count;
      const KktReport rep = verify_kkt(p, ch, t, sol, sol.duals);
      CHECK(rep.max_residual() < 1e-6);
    }
  }
  CHECK(general_count > 50);
}

TEST_CASE("kkt report accepts the sensing closed form with inverted dual") {
  SystemParams p = unit_params(3, 2, 2.0);
  Rng rng(37);
  const CommChannel ch = random_channel(2, 3, rng);
  const QosTargets t{0.0, 0.6};
  const IsacSolution sen = solve_sensing_dominated(p, t);
  // Invert the tail stationarity for the matching CRB dual.
  const double e = power_allocation(ch, sen.q)(0) * sen.tau_s;
  const double gamma = e * e / (p.pa_efficiency * sense_coef(p));
  IsacSolution sol = sen;
  finalize_metrics(p, ch, sol);
  const KktReport rep = verify_kkt(p, ch, t, sol, {gamma, 0.0});
  CHECK(rep.stationarity_max < 1e-10);
  CHECK(rep.comp_crb < 1e-10);
  CHECK(rep.tau_at_bound);
  CHECK(rep.tau_residual == 0.0);
}
