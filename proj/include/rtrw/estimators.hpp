#pragma once

// Small statistics toolbox shared by the simulators and the test suites:
// running moments, least-squares slopes, chi-square machinery, quantiles,
// tail-index estimators, and the quadrature used as an exact reference for
// Laplace-type functionals of the heavy-tailed holding times.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace rtrw {

class Welford {
 public:
  void add(double x) {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double sd() const { return std::sqrt(variance()); }
  double se() const { return n_ > 0 ? sd() / std::sqrt(static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0, m2_ = 0.0;
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit least_squares_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("least_squares_line: need two equally sized samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("least_squares_line: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  return f;
}

// Pearson statistic for observed bin counts against model probabilities.
inline double chi_square_stat(const std::vector<long>& observed,
                              const std::vector<double>& probs) {
  if (observed.size() != probs.size() || observed.empty())
    throw std::invalid_argument("chi_square_stat: bin mismatch");
  long total = 0;
  for (long c : observed) total += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double expect = probs[i] * static_cast<double>(total);
    if (!(expect > 0)) throw std::invalid_argument("chi_square_stat: zero expected count");
    double d = static_cast<double>(observed[i]) - expect;
    stat += d * d / expect;
  }
  return stat;
}

// 99% critical values used by the checks; frozen from scipy.stats.chi2.ppf.
inline double chi_square_crit99(int dof) {
  switch (dof) {
    case 1: return 6.634897;
    case 2: return 9.210340;
    case 3: return 11.344867;
    case 4: return 13.276704;
    case 5: return 15.086272;
    case 6: return 16.811894;
    case 7: return 18.475307;
    case 8: return 20.090235;
    case 9: return 21.665994;
    case 10: return 23.209251;
    case 11: return 24.724970;
    case 12: return 26.216967;
    case 13: return 27.688250;
    case 14: return 29.141238;
    case 15: return 30.577914;
    default: throw std::invalid_argument("chi_square_crit99: dof not tabulated");
  }
}

template <class F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels < 2 || panels % 2 != 0) throw std::invalid_argument("simpson: panels must be even");
  double h = (b - a) / panels;
  double acc = f(a) + f(b);
  for (int i = 1; i < panels; ++i) acc += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// E[exp(-s K)] for the holding-time law P(K >= t) = t^-alpha on [1, inf),
// i.e. K = U^{-1/alpha}. Integrates exp(-s u^{-1/alpha}) over u in (0,1]
// on a log grid; the neglected piece below the cutoff is < 1e-18.
inline double laplace_holding_exact(double alpha, double s) {
  if (!(alpha > 0)) throw std::invalid_argument("laplace_holding_exact: alpha must be positive");
  if (s == 0.0) return 1.0;
  if (!(s > 0)) throw std::invalid_argument("laplace_holding_exact: s must be nonnegative");
  double eps = std::pow(s / 45.0, alpha);
  if (eps > 0.5) eps = 0.5;
  auto g = [&](double x) { return std::exp(x - s * std::exp(-x / alpha)); };
  return simpson(g, std::log(eps), 0.0, 1 << 14);
}

// Centred variant E[exp(-s (K - E[K]))]; requires alpha > 1.
inline double laplace_holding_centred_exact(double alpha, double s) {
  if (!(alpha > 1)) throw std::invalid_argument("laplace_holding_centred_exact: needs finite mean");
  double mean = alpha / (alpha - 1.0);
  return std::exp(s * mean) * laplace_holding_exact(alpha, s);
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median_of: empty sample");
  std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + mid - 1, v.begin() + mid);
  return 0.5 * (hi + v[mid - 1]);
}

// Hill estimator of the tail index from the k largest order statistics.
inline double hill_tail_index(std::vector<double> sample, std::size_t k) {
  if (k < 2 || k >= sample.size()) throw std::invalid_argument("hill_tail_index: bad k");
  std::nth_element(sample.begin(), sample.begin() + k, sample.end(), std::greater<double>());
  // sample[0..k-1] now hold the k largest values, sample[k] the (k+1)-th.
  double xk1 = sample[k];
  if (!(xk1 > 0)) throw std::invalid_argument("hill_tail_index: needs positive order stats");
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(sample[i] / xk1);
  return static_cast<double>(k) / acc;
}

// Log-log least-squares slope of the empirical survival function on a grid
// of thresholds; for a tail P(X > t) ~ c t^-a the slope estimates -a.
inline double survival_loglog_slope(const std::vector<double>& sample,
                                    const std::vector<double>& thresholds) {
  if (thresholds.size() < 2) throw std::invalid_argument("survival_loglog_slope: need >= 2 thresholds");
  std::vector<double> xs, ys;
  for (double t : thresholds) {
    std::size_t count = 0;
    for (double x : sample) count += x > t ? 1 : 0;
    if (count == 0) throw std::invalid_argument("survival_loglog_slope: empty tail at threshold");
    xs.push_back(std::log(t));
    ys.push_back(std::log(static_cast<double>(count) / sample.size()));
  }
  return least_squares_line(xs, ys).slope;
}

struct TailIndexFit {
  double alpha_hat = 0.0;   // minus the log-log survival regression slope
  double stderr_ = 0.0;     // residual-based slope standard error
  double hill_cross = 0.0;  // Hill estimator over the exceedances of t_min
  long exceed_min = 0;      // samples above t_min
  long exceed_max = 0;      // samples above t_max
};

// Tail-index fit on [t_min, t_max]: regress log empirical survival on log t
// over five log-uniform thresholds, with a Hill cross-check at threshold
// t_min.  Requires at least 1000 samples above t_min and a genuinely
// decaying tail.
inline TailIndexFit tail_index_fit(const std::vector<double>& sample, double t_min,
                                   double t_max) {
  if (!(t_min > 0.0) || !(t_max > t_min))
    throw std::invalid_argument("tail_index_fit: need 0 < t_min < t_max");
  constexpr int kPoints = 5;
  std::vector<double> xs, ys;
  TailIndexFit fit;
  for (int i = 0; i < kPoints; ++i) {
    const double t = t_min * std::pow(t_max / t_min, i / static_cast<double>(kPoints - 1));
    long count = 0;
    for (double x : sample) count += x > t ? 1 : 0;
    if (i == 0) fit.exceed_min = count;
    if (i == kPoints - 1) fit.exceed_max = count;
    if (count > 0) {
      xs.push_back(std::log(t));
      ys.push_back(std::log(static_cast<double>(count) / sample.size()));
    }
  }
  if (fit.exceed_min < 1000)
    throw std::invalid_argument("tail_index_fit: insufficient exceedances above t_min");
  if (fit.exceed_min == fit.exceed_max)
    throw std::invalid_argument("tail_index_fit: degenerate tail (no decay across the window)");
  const LineFit line = least_squares_line(xs, ys);
  fit.alpha_hat = -line.slope;
  double mx = 0.0;
  for (double x : xs) mx += x;
  mx /= xs.size();
  double rss = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (line.intercept + line.slope * xs[i]);
    rss += r * r;
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  fit.stderr_ = xs.size() > 2 ? std::sqrt(rss / (xs.size() - 2) / sxx) : 0.0;

  std::vector<double> top;
  for (double x : sample)
    if (x > t_min) top.push_back(x);
  double acc = 0.0;
  for (double x : top) acc += std::log(x / t_min);
  fit.hill_cross = acc > 0.0 ? static_cast<double>(top.size()) / acc : 0.0;
  return fit;
}

}  // namespace rtrw
