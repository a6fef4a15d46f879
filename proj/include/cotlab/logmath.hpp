#pragma once

#include "cotlab/types.hpp"

#include <cmath>
#include <limits>

namespace cotlab {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(exp(a) + exp(b)) without leaving log space.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

/// log(sum_i exp(v_i)), max-subtracted.
inline double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

inline double log_sum_exp(const Vec& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

/// log((1/n) sum_i exp(v_i))
inline double log_mean_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  return log_sum_exp(v) - std::log(static_cast<double>(v.size()));
}

/// In-place logits -> log-softmax. Entries at -inf stay -inf.
inline void log_softmax_inplace(Vec& logits) {
  const double z = log_sum_exp(logits);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (logits[i] != kNegInf) logits[i] -= z;
  }
}

inline Vec softmax(const Vec& logits) {
  Vec p = logits;
  const double hi = p.maxCoeff();
  p.array() = (p.array() - hi).exp();
  p /= p.sum();
  return p;
}

/// Pearson correlation; returns NaN when either coordinate has zero variance.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace cotlab
