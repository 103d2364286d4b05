#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace nomatail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct QuadratureFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Upper tail of the standard normal, Q(x) = P(Z > x).
/// Routed through erfc so the relative accuracy in the deep tail is that of
/// the platform libm (well below the 1e-12 absolute error we rely on).
inline double gaussian_q(double x) { return 0.5 * std::erfc(x * M_SQRT1_2); }

// ---------------------------------------------------------------------------
// Gauss-Kronrod 7/15 panel rule.
//
// Node/weight table is the standard QUADPACK set for [-1, 1]; only the
// non-negative abscissas are stored, the rule is symmetric.  The embedded
// 7-point Gauss rule shares the odd-indexed abscissas and supplies the error
// estimate.  Validated in the test suite against an independent quadrature.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr int kGkHalf = 8;  // nodes at x >= 0, [7] is the midpoint

inline constexpr double kGkNode[kGkHalf] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993945, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0};

inline constexpr double kGkWeight[kGkHalf] = {
    0.02293532201052922, 0.06309209262997855, 0.10479001032225018,
    0.14065325971552592, 0.16900472663926790, 0.19035057806478540,
    0.20443294007529889, 0.20948214108472782};

// Gauss-7 weights for kGkNode[1], [3], [5], [7]; zero elsewhere.
inline constexpr double kG7Weight[kGkHalf] = {
    0.0, 0.12948496616886969, 0.0, 0.27970539148927667,
    0.0, 0.3818300505051189,  0.0, 0.4179591836734694};

struct PanelEstimate {
  double value;
  double error;
};

template <class F>
PanelEstimate gk15_panel(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double i15 = 0.0, i7 = 0.0;
  for (int j = 0; j < kGkHalf; ++j) {
    const double dx = h * kGkNode[j];
    const double fs = (j == kGkHalf - 1) ? f(c) : f(c - dx) + f(c + dx);
    i15 += kGkWeight[j] * fs;
    i7 += kG7Weight[j] * fs;
  }
  i15 *= h;
  i7 *= h;
  // QUADPACK-style sharpened error estimate.
  const double diff = std::abs(i15 - i7);
  const double err = diff > 0.0 ? std::min(diff, diff * std::sqrt(diff * 200.0)) : 0.0;
  return {i15, err};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b].
/// Bisects the worst panel until the summed error estimate satisfies
/// rel_tol * |integral| (with abs_floor as an absolute escape for integrals
/// near zero).  Throws QuadratureFailure if the panel budget is exhausted.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-9,
                          double abs_floor = 1e-300, int max_panels = 4000) {
  struct Piece {
    double a, b, value, error;
  };
  if (!(b > a)) return 0.0;
  std::vector<Piece> pieces;
  auto first = detail::gk15_panel(f, a, b);
  pieces.push_back({a, b, first.value, first.error});
  while (true) {
    double total = 0.0, err = 0.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      total += pieces[i].value;
      err += pieces[i].error;
      if (pieces[i].error > pieces[worst].error) worst = i;
    }
    if (err <= std::max(rel_tol * std::abs(total), abs_floor)) return total;
    if (static_cast<int>(pieces.size()) >= max_panels)
      throw QuadratureFailure("adaptive quadrature: panel budget exhausted, est err " +
                              std::to_string(err));
    const Piece p = pieces[worst];
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b))
      throw QuadratureFailure("adaptive quadrature: interval collapsed before tolerance met");
    auto left = detail::gk15_panel(f, p.a, mid);
    auto right = detail::gk15_panel(f, mid, p.b);
    pieces[worst] = {p.a, mid, left.value, left.error};
    pieces.push_back({mid, p.b, right.value, right.error});
  }
}

// ---------------------------------------------------------------------------
// 1-D searches
// ---------------------------------------------------------------------------

struct MinimizeResult {
  double x;
  double fx;
  long evals;
};

/// Golden-section minimization of a unimodal f on [a, b].
/// Stops when the bracket shrinks below rel_tol relative to its location
/// (plus a tiny absolute floor), or after max_iter shrink steps.
template <class F>
MinimizeResult golden_section_minimize(F&& f, double a, double b,
                                       double rel_tol = 1e-6, int max_iter = 200) {
  static const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;  // 1/phi
  long evals = 0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  evals += 2;
  for (int it = 0; it < max_iter; ++it) {
    const double scale = 0.5 * (std::abs(c) + std::abs(d));
    if ((b - a) <= rel_tol * scale + 1e-300) break;
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
    ++evals;
  }
  return fc < fd ? MinimizeResult{c, fc, evals} : MinimizeResult{d, fd, evals};
}

/// Bisection for the sign change of f on [lo, hi]; requires f(lo) < 0 and
/// f(hi) >= 0 (f may return +inf above the root).  Returns the largest point
/// known to satisfy f < 0, to relative tolerance rel_tol.
template <class F>
double bisect_last_negative(F&& f, double lo, double hi, double rel_tol = 1e-9,
                            int max_iter = 200) {
  for (int it = 0; it < max_iter && (hi - lo) > rel_tol * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace nomatail
