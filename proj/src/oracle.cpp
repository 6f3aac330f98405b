#include "isac/oracle.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "isac/random.hpp"
#include "isac/scalar.hpp"

namespace isac {

namespace {

constexpr double kLn2 = M_LN2;
constexpr double kInf = std::numeric_limits<double>::infinity();

double sense_coef(const SystemParams& p) {
  return p.noise_sense_w * p.n_rx_sense / p.bandwidth_hz;
}

// ---------------------------------------------------------------------------
// Reference dual machinery. Everything here recovers energies by scalar
// bisection on the stationarity equations; nothing is shared with the
// production solver.

struct OracleCtx {
  const SystemParams& p;
  const CommChannel& c;
  const QosTargets& t;
  double sN;
};

// d/de of the per-subchannel Lagrangian term; increasing in e.
double head_grad(const OracleCtx& x, double lam2, double gamma, double nu,
                 double tau, double e) {
  const double s2 = x.p.noise_comm_w;
  double g = 1.0 / x.p.pa_efficiency;
  if (gamma > 0.0) g -= gamma * x.sN / (e * e);
  g -= nu / (kLn2 * x.p.t_max_s) * (lam2 / s2) /
       (1.0 + lam2 * e / (s2 * tau));
  return g;
}

double head_energy_bisect(const OracleCtx& x, double lam2, double gamma,
                          double nu, double tau) {
  if (gamma > 0.0) {
    // At the dedicated-sensing energy the gradient is <= 0 by construction,
    // and at twice that energy plus twice the water-filling cap each gradient
    // term is at most half of 1/eta, so the bracket below is guaranteed.
    const double lo = std::sqrt(x.p.pa_efficiency * gamma * x.sN);
    auto g = [&](double e) { return head_grad(x, lam2, gamma, nu, tau, e); };
    if (g(lo) >= 0.0) return lo;
    const double hi = 2.0 * lo + 2.0 * tau * x.p.pa_efficiency * nu /
                                     (kLn2 * x.p.t_max_s);
    return bisect_root(g, lo, hi, 1e-11, 100);
  }
  // Zero CRB dual: the gradient at 0+ decides between no power and the
  // water-filling root.
  const double at_zero = 1.0 / x.p.pa_efficiency -
                         nu / (kLn2 * x.p.t_max_s) * lam2 / x.p.noise_comm_w;
  if (at_zero >= 0.0) return 0.0;
  auto g = [&](double e) { return head_grad(x, lam2, 0.0, nu, tau, e); };
  const double hi = expand_until([&](double e) { return g(e) > 0.0; },
                                 tau, 4.0, 1e280);
  return bisect_root(g, 0.0, hi, 1e-11, 100);
}

double tail_energy_bisect(const OracleCtx& x, double gamma) {
  if (gamma <= 0.0) return 0.0;
  const double guess = std::sqrt(x.p.pa_efficiency * gamma * x.sN);
  auto g = [&](double e) {
    return 1.0 / x.p.pa_efficiency - gamma * x.sN / (e * e);
  };
  return bisect_root(g, 0.5 * guess, 2.0 * guess, 1e-11, 100);
}

VectorXd energies_at(const OracleCtx& x, double gamma, double nu, double tau) {
  VectorXd e = VectorXd::Zero(x.p.m_tx);
  for (int i = 0; i < x.c.rank_r; ++i) {
    e(i) = head_energy_bisect(x, x.c.gain2(i), gamma, nu, tau);
  }
  const double et = tail_energy_bisect(x, gamma);
  for (int i = x.c.rank_r; i < x.p.m_tx; ++i) e(i) = et;
  return e;
}

double rate_sum_log(const OracleCtx& x, const VectorXd& e, double tau) {
  double s = 0.0;
  for (int i = 0; i < x.c.rank_r; ++i) {
    s += std::log2(1.0 + x.c.gain2(i) * e(i) / (x.p.noise_comm_w * tau));
  }
  return s;
}

// Dual scale probes (local re-derivations, kept independent of the solver).
double oracle_gamma_ref(const OracleCtx& x) {
  return x.sN * x.p.m_tx * x.p.m_tx /
         (x.p.pa_efficiency * x.t.crb_max * x.t.crb_max);
}

double oracle_nu_ref(const OracleCtx& x, double tau) {
  const double lam2 = x.c.rank_r > 0 ? x.c.gain2(0) : 1.0;
  const double s2 = x.p.noise_comm_w;
  double nu = kLn2 * x.p.t_max_s * s2 / (x.p.pa_efficiency * lam2);
  if (x.t.rate_bps_hz > 0.0 && x.c.rank_r > 0) {
    const double need = x.t.rate_bps_hz * x.p.t_max_s / tau;
    auto rate_at_level = [&](double w) {
      double s = 0.0;
      for (int i = 0; i < x.c.rank_r; ++i) {
        const double alloc = std::fmax(0.0, w - s2 / x.c.gain2(i));
        s += std::log2(1.0 + x.c.gain2(i) * alloc / s2);
      }
      return s;
    };
    double lo = s2 / lam2;
    const double hi = expand_until(
        [&](double w) { return rate_at_level(w) >= need; }, 2.0 * lo);
    const double level = bisect_root(
        [&](double w) { return rate_at_level(w) - need; }, lo, hi, 1e-12, 200);
    nu = std::fmax(nu, level * kLn2 * x.p.t_max_s / x.p.pa_efficiency);
  }
  return nu;
}

struct Axis {
  std::vector<double> pts;  // sorted, may start with an exact 0
  bool has_zero = false;
};

Axis make_axis(double lo, double hi, int n, bool with_zero) {
  Axis a;
  a.has_zero = with_zero;
  if (with_zero) {
    a.pts.push_back(0.0);
    --n;
  }
  const double step = std::pow(hi / lo, 1.0 / (n - 1));
  double v = lo;
  for (int i = 0; i < n; ++i) {
    a.pts.push_back(v);
    v *= step;
  }
  return a;
}

// Zoom onto +-2 cells of the incumbent; a zero incumbent keeps the zero
// point and re-spans the lowest positive decades.
Axis refine_axis(const Axis& prev, double best, int n) {
  const int n_pos = static_cast<int>(prev.pts.size()) - (prev.has_zero ? 1 : 0);
  const double lo_pos = prev.has_zero ? prev.pts[1] : prev.pts.front();
  const double hi_pos = prev.pts.back();
  const double cell = std::pow(hi_pos / lo_pos, 1.0 / (n_pos - 1));
  if (best > 0.0) {
    return make_axis(best / (cell * cell), best * (cell * cell), n,
                     prev.has_zero && best <= lo_pos * cell * cell);
  }
  return make_axis(lo_pos * 1e-3, lo_pos * cell * cell, n, true);
}

struct FixedTauSolution {
  double energy = kInf;
  VectorXd e;
  double gamma = 0.0, nu = 0.0;
};

// Repaired feasible energy of the dual point's inner allocation. Selecting
// grid points by this (rather than by the dual value, which is second-order
// flat near its maximum) localizes the best feasible point sharply.
// `incumbent` allows pruning: each subchannel's rate gains at most
// (tau/T_max) log2(k) from a further scale k, which lower-bounds the energy
// any rate repair can reach; points that cannot beat the incumbent skip the
// exact bisection.
double repaired_energy(const OracleCtx& x, double tau, VectorXd& e,
                       double incumbent) {
  int zeros = 0;
  double inv_nonzero = 0.0;
  double e_max = 0.0;
  for (int i = 0; i < e.size(); ++i) {
    if (e(i) <= 0.0) ++zeros;
    else {
      inv_nonzero += 1.0 / e(i);
      e_max = std::fmax(e_max, e(i));
    }
  }
  if (zeros > 0) {
    const double budget = x.t.crb_max / x.sN - inv_nonzero;
    const double fill =
        budget > 0.0 ? zeros / budget : std::fmax(e_max, 1.0) * 1e-12;
    for (int i = 0; i < e.size(); ++i) {
      if (e(i) <= 0.0) e(i) = fill;
    }
  }
  double inv = 0.0;
  for (int i = 0; i < e.size(); ++i) inv += 1.0 / e(i);
  double s = std::fmax(1.0, x.sN * inv / x.t.crb_max);

  const double rate_req = x.t.rate_bps_hz;
  if (rate_req > 0.0 && x.c.rank_r > 0) {
    const double rate_s = tau / x.p.t_max_s * rate_sum_log(x, (s * e).eval(), tau);
    if (rate_s < rate_req) {
      // Cheap admissible bound on the extra scale the rate still needs.
      const double k_min = std::exp2((rate_req - rate_s) * x.p.t_max_s /
                                     (tau * x.c.rank_r));
      const double bound =
          k_min * s * e.sum() / x.p.pa_efficiency + x.p.p_nontrans_w * tau;
      if (bound >= incumbent) return kInf;
      auto rate_scaled = [&](double f) {
        return tau / x.p.t_max_s * rate_sum_log(x, (f * e).eval(), tau);
      };
      const double hi = expand_until(
          [&](double f) { return rate_scaled(f) >= rate_req; }, 2.0 * s);
      s = bisect_root(
          [&](double f) { return rate_scaled(f) - rate_req; }, s, hi, 1e-13,
          120);
    }
  }
  e *= s;
  const double total = e.sum();
  if (!(total > 0.0)) return rate_req > 0.0 ? kInf : 0.0;
  if (!std::isfinite(total)) return kInf;
  return total / x.p.pa_efficiency + x.p.p_nontrans_w * tau;
}

FixedTauSolution solve_fixed_tau(const OracleCtx& x, double tau, int n) {
  const double g_ref = oracle_gamma_ref(x);
  const double n_ref = oracle_nu_ref(x, tau);
  Axis ga = make_axis(g_ref * 1e-6, g_ref * 1e6, n,
                      x.c.rank_r == x.p.m_tx);  // gamma=0 only if no tail
  Axis na = make_axis(n_ref * 1e-6, n_ref * 1e6, n, true);

  FixedTauSolution out;
  for (int pass = 0; pass < 3; ++pass) {
    if (pass > 0) {
      ga = refine_axis(ga, out.gamma, n);
      na = refine_axis(na, out.nu, n);
    }
    for (double g : ga.pts) {
      for (double v : na.pts) {
        VectorXd e = energies_at(x, g, v, tau);
        const double val = repaired_energy(x, tau, e, out.energy);
        if (val < out.energy) {
          out.energy = val;
          out.e = e;
          out.gamma = g;
          out.nu = v;
        }
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

MatrixXcd assemble_response(const SystemParams& params,
                            const std::vector<SensingScene::Scatterer>& sc) {
  MatrixXcd h = MatrixXcd::Zero(params.n_rx_sense, params.m_tx);
  for (const auto& s : sc) {
    h += s.reflection * detail::steering_vector(params.n_rx_sense, s.aoa_rad) *
         detail::steering_vector(params.m_tx, s.aod_rad).adjoint();
  }
  return h;
}

SensingScene make_scene(const SystemParams& params, int k_count,
                        std::uint64_t seed) {
  if (k_count < 1) throw std::invalid_argument("k_count: must be >= 1");
  SensingScene scene;
  Rng rng(seed);
  scene.scatterers.reserve(k_count);
  for (int k = 0; k < k_count; ++k) {
    SensingScene::Scatterer s;
    s.aod_rad = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    s.aoa_rad = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    s.reflection = rng.cgaussian();
    scene.scatterers.push_back(s);
  }
  scene.h_s = assemble_response(params, scene.scatterers);
  return scene;
}

OracleSolution oracle_solve(const SystemParams& params,
                            const CommChannel& channel,
                            const QosTargets& targets, int grid_density) {
  if (channel.rank_r == 0 && targets.rate_bps_hz > 0.0) {
    throw InfeasibleError("oracle_solve: positive rate floor on rank-zero channel");
  }
  grid_density = std::max(grid_density, 16);
  OracleCtx x{params, channel, targets, sense_coef(params)};

  OracleSolution best;
  best.energy_j = kInf;
  auto eval_tau = [&](double tau) {
    const FixedTauSolution s = solve_fixed_tau(x, tau, grid_density);
    if (s.energy < best.energy_j) {
      best.energy_j = s.energy;
      best.e = s.e;
      best.tau_s = tau;
    }
    return s.energy;
  };

  if (params.t_max_s - params.t_min_s <= 0.0) {
    eval_tau(params.t_min_s);
    return best;
  }

  const int coarse = 7;
  int best_k = 0;
  double best_val = kInf;
  for (int k = 0; k < coarse; ++k) {
    const double tau = params.t_min_s +
                       (params.t_max_s - params.t_min_s) * k / (coarse - 1);
    const double v = eval_tau(tau);
    if (v < best_val) {
      best_val = v;
      best_k = k;
    }
  }
  const double span = (params.t_max_s - params.t_min_s) / (coarse - 1);
  const double lo = std::fmax(params.t_min_s, params.t_min_s + span * (best_k - 1));
  const double hi = std::fmin(params.t_max_s, params.t_min_s + span * (best_k + 1));
  golden_min(eval_tau, lo, hi, 1e-3, 32);
  return best;
}

// ---------------------------------------------------------------------------

McReport mc_validate_crb(const SystemParams& params, const SensingScene& scene,
                         const MatrixXcd& q, double tau_s, long trials,
                         std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials: must be >= 1");
  const int m = params.m_tx;
  const int ns = params.n_rx_sense;
  const long n_sym = std::llround(tau_s * params.bandwidth_hz);
  if (n_sym < m) {
    throw std::invalid_argument(
        "tau_s: tau_s * bandwidth_hz symbols must be >= m_tx for least squares");
  }

  Eigen::LLT<MatrixXcd> llt(q);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("mc_validate_crb: covariance must be full rank");
  }
  const MatrixXcd l = llt.matrixL();

  Rng rng(seed);
  McReport rep;
  rep.trials = trials;

  // One Gaussian signal block, redrawn in the (measure-zero) event of a
  // singular Gram matrix.
  MatrixXcd x(m, n_sym);
  MatrixXcd gram(m, m);
  while (true) {
    for (long t = 0; t < n_sym; ++t) {
      for (int i = 0; i < m; ++i) x(i, t) = rng.cgaussian();
    }
    x = l * x;
    gram = x * x.adjoint();
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(gram, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo > 0.0 && hi / lo < 1e12) break;
    ++rep.redraws;
  }

  const MatrixXcd gram_inv = gram.inverse();
  const MatrixXcd estimator = x.adjoint() * gram_inv;  // n_sym x m
  const double noise_sd = std::sqrt(params.noise_sense_w);

  CompensatedSum mse;
  MatrixXcd err_sum = MatrixXcd::Zero(ns, m);
  MatrixXcd z(ns, n_sym);
  for (long trial = 0; trial < trials; ++trial) {
    for (long t = 0; t < n_sym; ++t) {
      for (int i = 0; i < ns; ++i) z(i, t) = noise_sd * rng.cgaussian();
    }
    const MatrixXcd y = scene.h_s * x + z;
    const MatrixXcd err = y * estimator - scene.h_s;
    mse.add(err.squaredNorm());
    err_sum += err;
  }

  rep.empirical_sum_mse = mse.value() / static_cast<double>(trials);
  rep.crb_trace_sample =
      params.noise_sense_w * ns * gram_inv.trace().real();
  rep.crb_trace_stat = crb_trace(params, q, tau_s);
  rep.sample_cov_dev =
      (gram / static_cast<double>(n_sym) - q).norm() / q.norm();

  const MatrixXcd mean_err = err_sum / static_cast<double>(trials);
  rep.mean_err_fro = mean_err.norm();
  if (params.noise_sense_w > 0.0) {
    double worst = 0.0;
    for (int j = 0; j < m; ++j) {
      const double se = std::sqrt(params.noise_sense_w *
                                  std::real(gram_inv(j, j)) /
                                  static_cast<double>(trials));
      for (int i = 0; i < ns; ++i) {
        worst = std::fmax(worst, std::abs(mean_err(i, j)) / se);
      }
    }
    rep.max_entry_dev_se = worst;
  }
  return rep;
}

}  // namespace isac
