#pragma once

// Reference computations for the tests, written independently of the library
// and as plainly as possible: long double, dense loops, exhaustive search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace oracle {

inline long double icc(long double theta, long double b) { return 1.0L / (1.0L + std::exp(-(theta - b))); }

/// Dense matrix: z[j][i] in {0, 1}, or -1 for a missing response.
inline long double log_likelihood(const std::vector<std::vector<int>>& z, const std::vector<double>& theta,
                                  const std::vector<double>& b) {
  long double ll = 0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    for (std::size_t i = 0; i < z[j].size(); ++i) {
      if (z[j][i] < 0) continue;
      long double p = icc(theta[j], b[i]);
      p = std::clamp(p, 1e-12L, 1.0L - 1e-12L);
      ll += z[j][i] ? std::log(p) : std::log(1.0L - p);
    }
  }
  return ll;
}

/// argmax over the grid lo, lo + step, ..., hi of the ability log-likelihood.
/// The first maximum wins.
inline double grid_argmax(const std::vector<std::uint8_t>& z, const std::vector<double>& b, double lo = -6.0,
                          double hi = 6.0, double step = 0.001) {
  const long n = std::lround((hi - lo) / step);
  double best_x = lo;
  long double best = -INFINITY;
  for (long k = 0; k <= n; ++k) {
    double x = lo + static_cast<double>(k) * step;
    long double ll = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      long double p = icc(x, b[i]);
      ll += z[i] ? std::log(p) : std::log1p(-p);
    }
    if (ll > best) {
      best = ll;
      best_x = x;
    }
  }
  return best_x;
}

inline double mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = x.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += (long double)x[i] * x[i];
    syy += (long double)y[i] * y[i];
    sxy += (long double)x[i] * y[i];
  }
  long double cov = sxy - sx * sy / n;
  return static_cast<double>(cov / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n)));
}

/// Mid-ranks through a value -> (first position, count) table.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::map<double, std::pair<std::size_t, std::size_t>> pos;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    auto it = pos.find(sorted[k]);
    if (it == pos.end()) pos[sorted[k]] = {k, 1};
    else ++it->second.second;
  }
  std::vector<double> r;
  for (double x : v) {
    auto [first, count] = pos[x];
    r.push_back(static_cast<double>(first) + (static_cast<double>(count) + 1.0) / 2.0);
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

/// Population-moment skewness.
inline double skewness(const std::vector<double>& v) {
  long double m = mean(v), m2 = 0, m3 = 0;
  for (double x : v) {
    m2 += (x - m) * (x - m);
    m3 += (x - m) * (x - m) * (x - m);
  }
  m2 /= v.size();
  m3 /= v.size();
  return static_cast<double>(m3 / std::pow(m2, 1.5L));
}

inline double sample_std(const std::vector<double>& v) {
  long double m = mean(v), ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return static_cast<double>(std::sqrt(ss / (v.size() - 1)));
}

}  // namespace oracle
