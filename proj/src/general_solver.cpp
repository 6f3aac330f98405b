#include "isac/general_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "isac/closed_form.hpp"
#include "isac/scalar.hpp"

namespace isac {

namespace {

constexpr double kLn2 = M_LN2;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Ellipsoid controls (2-D cuts shrink the volume by sqrt(16/27) per step).
constexpr int kMaxEllipsoidIters = 5000;
constexpr double kVolumeFloor = 1e-30;
constexpr int kStallWindow = 50;
constexpr double kStallImprovement = 1e-9;
constexpr double kVolumeShrink = 0.769800358919501;  // sqrt(16/27)

double sense_coef(const SystemParams& p) {
  return p.noise_sense_w * p.n_rx_sense / p.bandwidth_hz;
}

// ---------------------------------------------------------------------------
// Positive root of a monic cubic u^3 + a2 u^2 + a1 u + a0 with a0 < 0.

double cubic_value(double u, double a2, double a1, double a0) {
  return ((u + a2) * u + a1) * u + a0;
}

double cubic_rel_residual(double u, double a2, double a1, double a0) {
  const double scale = std::fabs(u * u * u) + std::fabs(a2 * u * u) +
                       std::fabs(a1 * u) + std::fabs(a0) + 1e-300;
  return std::fabs(cubic_value(u, a2, a1, a0)) / scale;
}

double cubic_newton_polish(double u, double a2, double a1, double a0) {
  for (int it = 0; it < 4; ++it) {
    const double f = cubic_value(u, a2, a1, a0);
    const double df = (3.0 * u + 2.0 * a2) * u + a1;
    if (df == 0.0) break;
    double next = u - f / df;
    if (!(next > 0.0) || !std::isfinite(next)) next = 0.5 * u;
    u = next;
  }
  return u;
}

double cubic_positive_root_bisect(double a2, double a1, double a0) {
  // f(0) = a0 < 0 and the leading term wins eventually.
  double hi = 2.0 * std::fmax(1.0, std::fmax(std::fabs(a2),
                  std::fmax(std::sqrt(std::fabs(a1)), std::cbrt(std::fabs(a0)))));
  hi = expand_until([&](double u) { return cubic_value(u, a2, a1, a0) > 0.0; },
                    hi, 4.0, 1e30);
  return bisect_root([&](double u) { return cubic_value(u, a2, a1, a0); }, 0.0,
                     hi, 1e-15, 300);
}

double cubic_positive_root(double a2, double a1, double a0) {
  const double k1 = a2 / 3.0;
  const double k2 = (2.0 * a2 * a2 * a2 - 9.0 * a2 * a1 + 27.0 * a0) / 54.0;
  const double k3 = (3.0 * a1 - a2 * a2) / 9.0;
  const double disc = k2 * k2 + k3 * k3 * k3;

  double best = -1.0;
  double best_res = kInf;
  auto consider = [&](double u) {
    if (!(u > 0.0) || !std::isfinite(u)) return;
    const double res = cubic_rel_residual(u, a2, a1, a0);
    if (res < best_res) {
      best_res = res;
      best = u;
    }
  };

  if (disc >= 0.0) {
    const double sq = std::sqrt(disc);
    consider(std::cbrt(-k2 + sq) + std::cbrt(-k2 - sq) - k1);
  } else {
    // Three real roots; evaluate trigonometrically and keep the positive one.
    const double rho = std::sqrt(-k3);
    const double arg = std::clamp(-k2 / (rho * rho * rho), -1.0, 1.0);
    const double theta = std::acos(arg);
    for (int m = 0; m < 3; ++m) {
      consider(2.0 * rho * std::cos((theta - 2.0 * M_PI * m) / 3.0) - k1);
    }
  }

  if (best > 0.0) {
    best = cubic_newton_polish(best, a2, a1, a0);
    if (cubic_rel_residual(best, a2, a1, a0) < 1e-9) return best;
  }
  // Cancellation near disc ~ 0 or no usable closed-form root.
  double u = cubic_positive_root_bisect(a2, a1, a0);
  u = cubic_newton_polish(u, a2, a1, a0);
  return u;
}

// ---------------------------------------------------------------------------
// Inner Lagrangian minimization pieces.

struct InnerEval {
  InnerAllocation alloc;
  double crb_lhs = 0.0;  // sense_coef * sum 1/e_i (capped when some e_i == 0)
  double rate = 0.0;
  double value = 0.0;    // dual function at (gamma, nu)
};

// LHS of the on-duration optimality condition at fixed duals; the head
// energies are re-solved at every trial duration.
double duration_lhs(const SystemParams& p, const CommChannel& c, double gamma,
                    double nu, double tau) {
  double sum_log = 0.0;
  double sum_inv = 0.0;
  for (int i = 0; i < c.rank_r; ++i) {
    const double e = head_energy_cardano(p, c, i, gamma, nu, tau);
    const double x = c.gain2(i) * e / (p.noise_comm_w * tau);
    sum_log += std::log2(1.0 + x);
    sum_inv += 1.0 / (1.0 + x);
  }
  return p.p_nontrans_w -
         nu / p.t_max_s * (sum_log + (sum_inv - c.rank_r) / kLn2);
}

// Duration-dependent part of the Lagrangian, for the rare non-monotone
// fallback scan.
double lagrangian_tau_part(const SystemParams& p, const CommChannel& c,
                           double gamma, double nu, double tau) {
  double val = p.p_nontrans_w * tau;
  for (int i = 0; i < c.rank_r; ++i) {
    const double e = head_energy_cardano(p, c, i, gamma, nu, tau);
    val += e / p.pa_efficiency;
    if (gamma > 0.0 && e > 0.0) val += gamma * sense_coef(p) / e;
    const double x = c.gain2(i) * e / (p.noise_comm_w * tau);
    val -= nu * tau / p.t_max_s * std::log2(1.0 + x);
  }
  return val;
}

double rate_of_energies(const SystemParams& p, const CommChannel& c,
                        const VectorXd& e, double tau) {
  double sum_log = 0.0;
  for (int i = 0; i < c.rank_r; ++i) {
    sum_log += std::log2(1.0 + c.gain2(i) * e(i) / (p.noise_comm_w * tau));
  }
  return tau / p.t_max_s * sum_log;
}

double crb_of_energies(const SystemParams& p, const VectorXd& e) {
  double sum_inv = 0.0;
  for (int i = 0; i < e.size(); ++i) {
    if (e(i) <= 0.0) return kInf;
    sum_inv += 1.0 / e(i);
  }
  return sense_coef(p) * sum_inv;
}

InnerEval inner_eval(const SystemParams& p, const CommChannel& c,
                     const QosTargets& t, double gamma, double nu) {
  InnerEval out;
  out.alloc = solve_tau(p, c, gamma, nu);
  const VectorXd& e = out.alloc.e;
  const double tau = out.alloc.tau_s;

  out.rate = rate_of_energies(p, c, e, tau);
  out.crb_lhs = crb_of_energies(p, e);
  if (!std::isfinite(out.crb_lhs)) out.crb_lhs = 1e30 * std::fmax(1.0, t.crb_max);

  out.value = e.sum() / p.pa_efficiency + p.p_nontrans_w * tau +
              nu * (t.rate_bps_hz - out.rate);
  if (gamma > 0.0) out.value += gamma * (out.crb_lhs - t.crb_max);
  return out;
}

// ---------------------------------------------------------------------------
// Dual scale probes for initialization and grids.

double gamma_probe(const SystemParams& p, const QosTargets& t) {
  const double e_sen = sense_coef(p) * p.m_tx / t.crb_max;
  return e_sen * e_sen / (p.pa_efficiency * sense_coef(p));
}

double nu_floor(const SystemParams& p, const CommChannel& c) {
  if (c.rank_r == 0) return 1e-12;
  return kLn2 * p.t_max_s * p.noise_comm_w /
         (p.pa_efficiency * c.gain2(0));
}

double nu_probe(const SystemParams& p, const CommChannel& c,
                const QosTargets& t) {
  double probe = nu_floor(p, c);
  if (t.rate_bps_hz > 0.0 && c.rank_r > 0) {
    // Water level of the minimum-power design at the rate floor maps to a
    // dual value through the zero-CRB stationarity.
    const SeComResult se = solve_se_com(p, c, t.rate_bps_hz);
    const VectorXd alloc = power_allocation(c, se.q);
    const double level = alloc(0) + p.noise_comm_w / c.gain2(0);
    probe = std::fmax(probe, level * kLn2 * p.t_max_s / p.pa_efficiency);
  }
  return probe;
}

}  // namespace

// ---------------------------------------------------------------------------

double tail_energy(const SystemParams& params, double gamma) {
  if (!(gamma > 0.0)) {
    throw DegenerateDualError(
        "tail_energy: zero CRB dual would zero the dedicated sensing energy");
  }
  return std::sqrt(params.pa_efficiency * gamma * sense_coef(params));
}

CubicCoeffs cubic_coefficients(const SystemParams& params,
                               const CommChannel& channel, int i, double gamma,
                               double nu, double tau_s) {
  CubicCoeffs k;
  const double lam2 = channel.gain2(i);
  const double s2 = params.noise_comm_w;
  k.a = lam2 / (params.pa_efficiency * s2);
  k.b = 1.0 / params.pa_efficiency - nu * lam2 / (s2 * kLn2 * params.t_max_s);
  k.d = -gamma * sense_coef(params);
  k.c = k.d * lam2 / s2;
  const double bt = k.b * tau_s;
  k.k1 = bt / (3.0 * k.a);
  k.k2 = (27.0 * k.a * k.a * k.d * tau_s - 9.0 * k.a * bt * k.c +
          2.0 * bt * bt * bt) /
         (54.0 * k.a * k.a * k.a);
  k.k3 = (3.0 * k.a * k.c - bt * bt) / (9.0 * k.a * k.a);
  return k;
}

double head_energy_cardano(const SystemParams& params,
                           const CommChannel& channel, int i, double gamma,
                           double nu, double tau_s) {
  if (i >= channel.rank_r) {
    throw SolverError("head_energy_cardano: index beyond channel rank");
  }
  const double lam2 = channel.gain2(i);
  const double eta = params.pa_efficiency;
  const double s2 = params.noise_comm_w;

  if (gamma <= 0.0) {
    // The inverse-square term drops and the stationarity is water-filling.
    const double p = eta * nu / (kLn2 * params.t_max_s) - s2 / lam2;
    return tau_s * std::fmax(0.0, p);
  }

  // Monic form of the energy cubic: e^3 + (b tau / a) e^2 + eta d e
  // + (d tau / a) = 0, rescaled so the root is O(1).
  const double a = lam2 / (eta * s2);
  const double b = 1.0 / eta - nu * lam2 / (s2 * kLn2 * params.t_max_s);
  const double d = -gamma * sense_coef(params);
  const double p2 = b * tau_s / a;
  const double p1 = eta * d;
  const double p0 = d * tau_s / a;

  const double scale =
      std::fmax(std::fmax(std::fabs(p2), std::sqrt(std::fabs(p1))),
                std::fmax(std::cbrt(std::fabs(p0)), 1e-300));
  const double u = cubic_positive_root(p2 / scale, p1 / (scale * scale),
                                       p0 / (scale * scale * scale));
  const double e = u * scale;
  if (!(e > 0.0) || !std::isfinite(e)) {
    throw SolverError("head_energy_cardano: no positive real root");
  }
  return e;
}

InnerAllocation solve_tau(const SystemParams& params,
                          const CommChannel& channel, double gamma, double nu) {
  const int m = params.m_tx;
  const int r = channel.rank_r;
  InnerAllocation out;

  double tau;
  if (params.p_nontrans_w <= 0.0) {
    // Without circuit power the duration derivative is never positive.
    tau = params.t_max_s;
    out.tau_at_upper = true;
  } else if (nu <= 0.0 || r == 0) {
    // The condition reduces to P_c > 0 for every duration.
    tau = params.t_min_s;
    out.tau_at_lower = true;
  } else if (params.t_max_s - params.t_min_s <= 0.0) {
    tau = params.t_min_s;
    out.tau_at_lower = out.tau_at_upper = true;
  } else {
    auto lhs = [&](double t) { return duration_lhs(params, channel, gamma, nu, t); };
    const double f_lo = lhs(params.t_min_s);
    const double f_hi = lhs(params.t_max_s);
    if (f_lo >= 0.0 && f_hi >= 0.0) {
      tau = params.t_min_s;
      out.tau_at_lower = true;
    } else if (f_lo <= 0.0 && f_hi <= 0.0) {
      tau = params.t_max_s;
      out.tau_at_upper = true;
    } else if (f_lo < 0.0 && f_hi > 0.0) {
      // 64 halvings push the bracket well below 1e-12 * t_max.
      tau = bisect_root(lhs, params.t_min_s, params.t_max_s, 0.0, 64);
    } else {
      // Decreasing-then-increasing sign pattern contradicts the convexity of
      // the inner minimum; scan and keep the best duration.
      out.non_monotone = true;
      double best_tau = params.t_min_s;
      double best_val = kInf;
      const int n = 65;
      for (int k = 0; k < n; ++k) {
        const double t = params.t_min_s +
                         (params.t_max_s - params.t_min_s) * k / (n - 1);
        const double val = lagrangian_tau_part(params, channel, gamma, nu, t);
        if (val < best_val) {
          best_val = val;
          best_tau = t;
        }
      }
      const double span = (params.t_max_s - params.t_min_s) / (n - 1);
      tau = golden_min(
          [&](double t) { return lagrangian_tau_part(params, channel, gamma, nu, t); },
          std::fmax(params.t_min_s, best_tau - span),
          std::fmin(params.t_max_s, best_tau + span), 1e-12);
    }
  }

  out.tau_s = tau;
  out.e = VectorXd::Zero(m);
  for (int i = 0; i < r; ++i) {
    out.e(i) = head_energy_cardano(params, channel, i, gamma, nu, tau);
  }
  if (r < m) {
    const double et = gamma > 0.0 ? tail_energy(params, gamma) : 0.0;
    for (int i = r; i < m; ++i) out.e(i) = et;
  }
  out.cubic.reserve(r);
  for (int i = 0; i < r; ++i) {
    out.cubic.push_back(cubic_coefficients(params, channel, i, gamma, nu, tau));
  }
  return out;
}

Eigen::Vector2d dual_subgradient(const SystemParams& params,
                                 const CommChannel& channel,
                                 const QosTargets& targets, double gamma,
                                 double nu) {
  const InnerEval in = inner_eval(params, channel, targets, gamma, nu);
  return {in.crb_lhs - targets.crb_max, targets.rate_bps_hz - in.rate};
}

// ---------------------------------------------------------------------------
// solve_general

namespace {

struct DualSolveState {
  double gamma = 0.0;
  double nu = 0.0;
  double value = -kInf;
  int iterations = 0;
  bool converged = false;
};

DualSolveState run_ellipsoid(const SystemParams& p, const CommChannel& c,
                             const QosTargets& t, double gamma0, double nu0) {
  DualSolveState best;
  DualState s;
  s.center << gamma0, nu0;
  s.shape = Eigen::Vector2d(std::pow(1e4 * gamma0, 2), std::pow(1e4 * nu0, 2))
                .asDiagonal();
  double volume = 1.0;
  std::vector<double> best_history;
  best_history.reserve(kMaxEllipsoidIters);

  int it = 0;
  for (; it < kMaxEllipsoidIters; ++it) {
    s.gamma = s.center(0);
    s.nu = s.center(1);
    Eigen::Vector2d cut;
    if (s.gamma < 0.0) {
      cut << -1.0, 0.0;  // feasibility cut for gamma >= 0
    } else if (s.nu < 0.0) {
      cut << 0.0, -1.0;
    } else {
      const InnerEval in = inner_eval(p, c, t, s.gamma, s.nu);
      if (in.value > best.value) {
        best.value = in.value;
        best.gamma = s.gamma;
        best.nu = s.nu;
      }
      // Maximizing the concave dual: discard the half-plane where it cannot
      // improve, i.e. cut along the negated subgradient.
      cut << -(in.crb_lhs - t.crb_max), -(t.rate_bps_hz - in.rate);
    }
    best_history.push_back(best.value);

    if (volume < kVolumeFloor) {
      best.converged = true;
      break;
    }
    if (it >= kStallWindow && std::isfinite(best.value)) {
      const double before = best_history[it - kStallWindow];
      if (std::isfinite(before) &&
          best.value - before <= kStallImprovement * std::fabs(best.value)) {
        best.converged = true;
        break;
      }
    }

    const double denom = cut.dot(s.shape * cut);
    if (!(denom > 0.0) || !std::isfinite(denom)) break;
    const Eigen::Vector2d pg = s.shape * cut / std::sqrt(denom);
    s.center -= pg / 3.0;
    s.shape = 4.0 / 3.0 * (s.shape - 2.0 / 3.0 * pg * pg.transpose());
    s.shape = 0.5 * (s.shape + s.shape.transpose().eval());
    volume *= kVolumeShrink;
  }
  best.iterations = it;
  return best;
}

// Inner minimizer with kink handling for the primal side. With a zero (or
// tiny) CRB dual the duration condition is flat in tau, the minimizer set is
// an interval, and the endpoint tie-break of solve_tau can leave the rate off
// its floor by up to t_max/t_min. Complementary slackness selects the member
// of the flat set whose rate sits exactly on the floor; retune the duration
// to it when it exists in the bracket.
struct RecoveredPrimal {
  VectorXd e;
  double tau = 0.0;
  double rate = 0.0;
  bool at_lower = false;
  bool at_upper = false;
  bool non_monotone = false;
};

RecoveredPrimal recover_primal(const SystemParams& p, const CommChannel& c,
                               const QosTargets& t, double gamma, double nu) {
  const InnerAllocation inner = solve_tau(p, c, gamma, nu);
  RecoveredPrimal out;
  out.e = inner.e;
  out.tau = inner.tau_s;
  out.non_monotone = inner.non_monotone;
  out.rate = rate_of_energies(p, c, out.e, out.tau);

  const double rate_req = t.rate_bps_hz;
  if (nu > 0.0 && rate_req > 0.0 && c.rank_r > 0 &&
      std::fabs(out.rate - rate_req) > 1e-12 * rate_req) {
    auto rate_at = [&](double tau) {
      double sum = 0.0;
      for (int i = 0; i < c.rank_r; ++i) {
        const double e = head_energy_cardano(p, c, i, gamma, nu, tau);
        sum += std::log2(1.0 + c.gain2(i) * e / (p.noise_comm_w * tau));
      }
      return tau / p.t_max_s * sum;
    };
    if (rate_at(p.t_min_s) <= rate_req && rate_req <= rate_at(p.t_max_s)) {
      out.tau = bisect_root(
          [&](double x) { return rate_at(x) - rate_req; }, p.t_min_s,
          p.t_max_s, 1e-14, 200);
      for (int i = 0; i < c.rank_r; ++i) {
        out.e(i) = head_energy_cardano(p, c, i, gamma, nu, out.tau);
      }
      out.rate = rate_of_energies(p, c, out.e, out.tau);
    }
  }
  const double edge = 1e-12 * p.t_max_s;
  out.at_lower = std::fabs(out.tau - p.t_min_s) <= edge;
  out.at_upper = std::fabs(out.tau - p.t_max_s) <= edge;
  return out;
}

// Exact dual point when the rate constraint is slack: every subchannel takes
// the common sensing energy and the CRB ceiling is met with equality.
void polish_rate_inactive(const SystemParams& p, const QosTargets& t,
                          double* gamma, double* nu) {
  const double e = sense_coef(p) * p.m_tx / t.crb_max;
  *gamma = e * e / (p.pa_efficiency * sense_coef(p));
  *nu = 0.0;
}

// One-dimensional solve for the rate dual at fixed gamma (the inner rate is
// nondecreasing in nu). Returns nu, possibly 0 when the floor is already met.
double solve_nu_for_rate(const SystemParams& p, const CommChannel& c,
                         const QosTargets& t, double gamma) {
  auto rate_at = [&](double nu) {
    return inner_eval(p, c, t, gamma, nu).rate;
  };
  if (rate_at(0.0) >= t.rate_bps_hz) return 0.0;
  double hi = expand_until(
      [&](double nu) { return rate_at(nu) >= t.rate_bps_hz; },
      nu_floor(p, c), 4.0, 1e280);
  return bisect_root(
      [&](double nu) { return rate_at(nu) - t.rate_bps_hz; }, 0.0, hi, 1e-14,
      300);
}

bool polish_newton(const SystemParams& p, const CommChannel& c,
                   const QosTargets& t, double gamma_floor, double* gamma,
                   double* nu) {
  const double rate_scale = std::fmax(t.rate_bps_hz, 1e-300);
  auto residual = [&](double lg, double ln) -> Eigen::Vector2d {
    const InnerEval in = inner_eval(p, c, t, std::exp(lg), std::exp(ln));
    return {(in.crb_lhs - t.crb_max) / t.crb_max,
            (t.rate_bps_hz - in.rate) / rate_scale};
  };

  double lg = std::log(*gamma);
  double ln = std::log(*nu);
  Eigen::Vector2d f = residual(lg, ln);
  const double tol = 1e-12;
  for (int it = 0; it < 40; ++it) {
    if (f.cwiseAbs().maxCoeff() <= tol) {
      *gamma = std::exp(lg);
      *nu = std::exp(ln);
      return true;
    }
    const double h = 1e-6;
    Eigen::Matrix2d jac;
    jac.col(0) = (residual(lg + h, ln) - residual(lg - h, ln)) / (2.0 * h);
    jac.col(1) = (residual(lg, ln + h) - residual(lg, ln - h)) / (2.0 * h);
    if (!jac.allFinite() || std::fabs(jac.determinant()) < 1e-300) return false;
    Eigen::Vector2d step = jac.partialPivLu().solve(-f);
    step = step.cwiseMax(-30.0).cwiseMin(30.0);

    bool accepted = false;
    for (double alpha = 1.0; alpha >= 1.0 / 1024.0; alpha *= 0.5) {
      const double lg2 = lg + alpha * step(0);
      const double ln2 = ln + alpha * step(1);
      if (std::exp(lg2) < gamma_floor) return false;  // CRB dual collapsing
      const Eigen::Vector2d f2 = residual(lg2, ln2);
      if (f2.norm() < f.norm()) {
        lg = lg2;
        ln = ln2;
        f = f2;
        accepted = true;
        break;
      }
    }
    if (!accepted) return false;
  }
  *gamma = std::exp(lg);
  *nu = std::exp(ln);
  return f.cwiseAbs().maxCoeff() <= 1e-8;
}

// Nested-bisection fallback: for each gamma solve the rate dual, then drive
// the CRB residual (decreasing in gamma) to zero.
bool polish_nested(const SystemParams& p, const CommChannel& c,
                   const QosTargets& t, double* gamma, double* nu) {
  auto crb_resid = [&](double g) {
    const double n = solve_nu_for_rate(p, c, t, g);
    return inner_eval(p, c, t, g, n).crb_lhs - t.crb_max;
  };
  double lo = *gamma, hi = *gamma;
  double f_lo = crb_resid(lo);
  double f_hi = f_lo;
  for (int k = 0; k < 80 && f_lo < 0.0; ++k) {
    lo *= 0.25;
    f_lo = crb_resid(lo);
  }
  for (int k = 0; k < 80 && f_hi > 0.0; ++k) {
    hi *= 4.0;
    f_hi = crb_resid(hi);
  }
  if (!(f_lo >= 0.0 && f_hi <= 0.0)) return false;
  const double g = bisect_root(crb_resid, lo, hi, 1e-13, 300);
  *gamma = g;
  *nu = solve_nu_for_rate(p, c, t, g);
  return true;
}

}  // namespace

IsacSolution solve_general(const SystemParams& params,
                           const CommChannel& channel,
                           const QosTargets& targets) {
  const double rate_req = targets.rate_bps_hz;
  if (channel.rank_r == 0 && rate_req > 0.0) {
    throw InfeasibleError(
        "solve_general: positive rate floor on rank-zero channel");
  }

  const double g_ref = gamma_probe(params, targets);
  double gamma = g_ref;
  double nu = nu_probe(params, channel, targets);
  DualSolveState dual;
  const double act_tol = 1e-7;

  if (rate_req <= 0.0 || channel.rank_r == 0) {
    polish_rate_inactive(params, targets, &gamma, &nu);
    dual.converged = true;
  } else {
    dual = run_ellipsoid(params, channel, targets, gamma, nu);
    gamma = dual.gamma;
    nu = dual.nu;

    // Activity pattern at the incumbent decides the polish branch; each
    // branch re-checks the constraint it assumed slack and falls through on
    // failure.
    const InnerEval at_best = inner_eval(params, channel, targets, gamma, nu);
    const double crb_slack = (at_best.crb_lhs - targets.crb_max) / targets.crb_max;
    const double rate_slack =
        (rate_req - at_best.rate) / std::fmax(rate_req, 1e-300);
    bool polished = false;

    if (rate_slack < -act_tol || nu <= 0.0) {
      double g2 = gamma, n2 = nu;
      polish_rate_inactive(params, targets, &g2, &n2);
      const InnerEval chk = inner_eval(params, channel, targets, g2, n2);
      if (chk.rate >= rate_req * (1.0 - 1e-9)) {
        gamma = g2;
        nu = n2;
        polished = true;
      }
    }
    if (!polished && channel.rank_r == params.m_tx &&
        (crb_slack < -act_tol || gamma <= 0.0)) {
      const double n2 = solve_nu_for_rate(params, channel, targets, 0.0);
      const RecoveredPrimal chk =
          recover_primal(params, channel, targets, 0.0, n2);
      if (crb_of_energies(params, chk.e) <= targets.crb_max * (1.0 + 1e-9) &&
          chk.rate >= rate_req * (1.0 - 1e-9)) {
        gamma = 0.0;
        nu = n2;
        polished = true;
      }
    }
    if (!polished) {
      double g2 = std::fmax(gamma, g_ref * 1e-12);
      double n2 = std::fmax(nu, nu_floor(params, channel) * 1e-12);
      if (polish_newton(params, channel, targets, g_ref * 1e-14, &g2, &n2)) {
        gamma = g2;
        nu = n2;
        polished = true;
      } else if (polish_nested(params, channel, targets, &g2, &n2)) {
        gamma = g2;
        nu = n2;
        polished = true;
      }
    }
    if (!polished) dual.converged = false;
  }

  // Primal recovery at the final duals, then minimal scaling to exact
  // feasibility (strong duality makes the factor -> 1).
  RecoveredPrimal rec = recover_primal(params, channel, targets, gamma, nu);
  if (!(crb_of_energies(params, rec.e) < kInf)) {
    // Degenerate zero allocations can only appear at gamma == 0; nudge.
    gamma = std::fmax(gamma, g_ref * 1e-9);
    rec = recover_primal(params, channel, targets, gamma, nu);
  }
  VectorXd e = rec.e;
  const double tau = rec.tau;

  double repair = 1.0;
  const double crb_now = crb_of_energies(params, e);
  if (crb_now > targets.crb_max) repair = crb_now / targets.crb_max;
  if (rate_req > 0.0) {
    auto rate_scaled = [&](double s) {
      return rate_of_energies(params, channel, (s * e).eval(), tau);
    };
    if (rate_scaled(repair) < rate_req) {
      const double hi = expand_until(
          [&](double s) { return rate_scaled(s) >= rate_req; }, 2.0 * repair);
      repair = bisect_root(
          [&](double s) { return rate_scaled(s) - rate_req; }, repair, hi,
          1e-14, 300);
    }
  }
  e *= repair;

  IsacSolution sol;
  sol.allocation = e / tau;
  sol.q = covariance_from_allocation(channel, sol.allocation);
  sol.tau_s = tau;
  sol.regime = Regime::General;
  sol.duals = {gamma, nu};
  finalize_metrics(params, channel, sol);

  sol.diag.iterations = dual.iterations;
  sol.diag.converged = dual.converged;
  sol.diag.repair_factor = repair;
  sol.diag.tau_at_lower = rec.at_lower;
  sol.diag.tau_at_upper = rec.at_upper;
  sol.diag.tau_non_monotone = rec.non_monotone;
  const double dual_value =
      inner_eval(params, channel, targets, gamma, nu).value;
  sol.diag.duality_gap =
      (sol.energy_j - dual_value) / std::fmax(std::fabs(dual_value), 1e-300);
  sol.diag.kkt_residual_max =
      verify_kkt(params, channel, targets, sol, sol.duals).max_residual();
  return sol;
}

// ---------------------------------------------------------------------------
// KKT residual report

double KktReport::max_residual() const {
  return std::fmax(std::fmax(comp_crb, comp_rate),
                   std::fmax(stationarity_max, tau_residual));
}

KktReport verify_kkt(const SystemParams& params, const CommChannel& channel,
                     const QosTargets& targets, const IsacSolution& solution,
                     const DualPair& duals) {
  KktReport rep;
  const double gamma = duals.gamma;
  const double nu = duals.nu;
  rep.dual_feasible = gamma >= 0.0 && nu >= 0.0;

  const double tau = solution.tau_s;
  const VectorXd p_alloc = solution.allocation.size() == params.m_tx
                               ? solution.allocation
                               : power_allocation(channel, solution.q);
  const VectorXd e = p_alloc * tau;
  const int m = params.m_tx;
  const int r = channel.rank_r;
  const double eta = params.pa_efficiency;
  const double sN = sense_coef(params);
  const double s2 = params.noise_comm_w;

  // Complementary slackness, relative to each constraint's scale.
  const double crb = crb_of_energies(params, e);
  if (gamma > 0.0) {
    rep.comp_crb = std::fabs(crb - targets.crb_max) / targets.crb_max;
  }
  const double rate = rate_of_energies(params, channel, e, tau);
  if (nu > 0.0) {
    rep.comp_rate = std::fabs(rate - targets.rate_bps_hz) /
                    std::fmax(targets.rate_bps_hz, 1e-300);
  }

  // Stationarity in each subchannel energy.
  double sum_log = 0.0;
  double sum_inv = 0.0;
  for (int i = 0; i < m; ++i) {
    if (e(i) <= 0.0) {
      rep.stationarity_max = kInf;
      continue;
    }
    const double inv_sq = gamma * sN / (e(i) * e(i));
    double resid = 1.0 / eta - inv_sq;
    double scale = std::fmax(1.0 / eta, inv_sq);
    if (i < r) {
      const double x = channel.gain2(i) * e(i) / (s2 * tau);
      const double rate_term =
          nu / (kLn2 * params.t_max_s) * (channel.gain2(i) / s2) / (1.0 + x);
      resid -= rate_term;
      scale = std::fmax(scale, rate_term);
      sum_log += std::log2(1.0 + x);
      sum_inv += 1.0 / (1.0 + x);
    }
    rep.stationarity_max =
        std::fmax(rep.stationarity_max, std::fabs(resid) / scale);
  }

  // Duration: interior stationarity, or a derivative-sign check at a bound
  // (the bound multipliers are not part of the reported dual pair).
  const double lhs =
      params.p_nontrans_w -
      nu / params.t_max_s * (sum_log + (sum_inv - r) / kLn2);
  const double lhs_scale =
      std::fmax(params.p_nontrans_w,
                nu / params.t_max_s * (sum_log + (sum_inv + r) / kLn2));
  const double bound_tol = 1e-9 * params.t_max_s;
  const bool at_lower = std::fabs(tau - params.t_min_s) <= bound_tol;
  const bool at_upper = std::fabs(tau - params.t_max_s) <= bound_tol;
  rep.tau_at_bound = at_lower || at_upper;
  if (lhs_scale <= 0.0) {
    rep.tau_residual = 0.0;
  } else if (at_lower && at_upper) {
    rep.tau_residual = 0.0;  // degenerate duration interval
  } else if (at_lower) {
    rep.tau_residual = std::fmax(0.0, -lhs) / lhs_scale;
  } else if (at_upper) {
    rep.tau_residual = std::fmax(0.0, lhs) / lhs_scale;
  } else {
    rep.tau_residual = std::fabs(lhs) / lhs_scale;
  }
  return rep;
}

}  // namespace isac
