// Scalar root finding and 1-D minimization used throughout the solvers.
#pragma once

#include <cmath>
#include <functional>
#include <utility>

namespace isac {

// Bisection for f(x) = 0 on [lo, hi]; requires a sign change. Runs until the
// bracket width drops below rel_tol * max(|lo|,|hi|) or max_iter, so roots of
// any magnitude resolve to the same relative accuracy.
template <typename F>
double bisect_root(F&& f, double lo, double hi, double rel_tol = 1e-14,
                   int max_iter = 200) {
  double flo = f(lo);
  if (flo == 0.0) return lo;
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
    const double scale =
        std::fmax(1e-300, std::fmax(std::fabs(lo), std::fabs(hi)));
    if (hi - lo <= rel_tol * scale) break;
  }
  return 0.5 * (lo + hi);
}

// Expands hi geometrically until pred(hi) holds (used to bracket monotone
// equations whose scale is unknown a priori). Returns the found endpoint or
// `hi_cap` if the predicate never fired.
template <typename P>
double expand_until(P&& pred, double hi, double factor = 4.0,
                    double hi_cap = 1e300) {
  while (hi < hi_cap && !pred(hi)) hi *= factor;
  return std::fmin(hi, hi_cap);
}

// Golden-section minimization of a unimodal f on [a, b]; the width tolerance
// is relative to the interval's magnitude.
template <typename F>
double golden_min(F&& f, double a, double b, double rel_tol = 1e-10,
                  int max_iter = 200) {
  constexpr double inv_phi = 0.6180339887498949;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < max_iter; ++it) {
    if (b - a <= rel_tol * std::fmax(1e-300, std::fabs(a) + std::fabs(b))) break;
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? c : d;
}

// Kahan-compensated accumulator for long Monte-Carlo sums.
class CompensatedSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace isac
