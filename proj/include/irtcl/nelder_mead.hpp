#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

namespace irtcl {

struct NelderMeadOptions {
  double alpha = 1.0;  // reflection
  double gamma = 2.0;  // expansion
  double rho = 0.5;    // contraction
  double sigma = 0.5;  // shrink
  double x_tol = 1e-4;
  std::size_t max_iter = 100;
};

struct NelderMeadResult {
  double x = 0.0;
  double fx = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

/// Minimizes a scalar function on [lo, hi] with a two-vertex simplex.
/// Trial points are projected onto the interval, so a minimum on the
/// boundary is returned exactly. Stops when the simplex is narrower than
/// `x_tol` or after `max_iter` iterations.
template <typename F>
NelderMeadResult nelder_mead_1d(F&& f, double x0, double x1, double lo, double hi,
                                const NelderMeadOptions& opt = {}) {
  auto clampx = [&](double x) { return std::clamp(x, lo, hi); };
  NelderMeadResult res;
  auto eval = [&](double x) {
    ++res.evaluations;
    return f(x);
  };

  double best = clampx(x0), worst = clampx(x1);
  if (best == worst) worst = clampx(best + (hi - lo) * 1e-3 + opt.x_tol);
  double f_best = eval(best), f_worst = eval(worst);
  if (f_worst < f_best) {
    std::swap(best, worst);
    std::swap(f_best, f_worst);
  }

  while (res.iterations < opt.max_iter && std::abs(worst - best) > opt.x_tol) {
    ++res.iterations;
    // With two vertices the centroid of all but the worst is the best vertex.
    const double c = best;
    const double xr = clampx(c + opt.alpha * (c - worst));
    const double fr = eval(xr);
    if (fr < f_best) {
      const double xe = clampx(c + opt.gamma * (xr - c));
      const double fe = eval(xe);
      if (fe < fr) {
        worst = xe;
        f_worst = fe;
      } else {
        worst = xr;
        f_worst = fr;
      }
    } else if (fr < f_worst) {
      // Outside contraction. In 1-D there is no "second worst" vertex to beat,
      // so a reflected point that improves on the worst goes through here.
      const double xc = clampx(c + opt.rho * (xr - c));
      const double fc = eval(xc);
      if (fc <= fr) {
        worst = xc;
        f_worst = fc;
      } else {
        worst = xr;
        f_worst = fr;
      }
    } else {
      const double xc = clampx(c + opt.rho * (worst - c));
      const double fc = eval(xc);
      if (fc < f_worst) {
        worst = xc;
        f_worst = fc;
      } else {
        worst = clampx(best + opt.sigma * (worst - best));
        f_worst = eval(worst);
      }
    }
    if (f_worst < f_best) {
      std::swap(best, worst);
      std::swap(f_best, f_worst);
    }
  }
  res.x = best;
  res.fx = f_best;
  return res;
}

}  // namespace irtcl
