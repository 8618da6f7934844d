#include "coda/beta_distribution.hpp"

#include <cmath>
#include <limits>

#include "coda/errors.hpp"

namespace coda {

namespace {

constexpr int kMaxIterations = 20000;
constexpr double kRelTolerance = 1e-15;
constexpr double kTiny = 1e-300;

double lgamma_reentrant(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

// Continued fraction for I_x(a, b); converges fast for x < (a + 1) / (a + b + 2).
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double dm = m;
    const double m2 = 2.0 * dm;
    double aa = dm * (b - dm) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + dm) * (qab + dm) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) <= kRelTolerance) break;
  }
  return h;
}

}  // namespace

double log_beta(double a, double b) {
  return lgamma_reentrant(a) + lgamma_reentrant(b) - lgamma_reentrant(a + b);
}

double regularized_incomplete_beta(double a, double b, double x, double log_norm) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log1p(-x) - log_norm;
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double regularized_incomplete_beta(double a, double b, double x) {
  return regularized_incomplete_beta(a, b, x, log_beta(a, b));
}

BetaDistribution::BetaDistribution(double a, double b) : a_(a), b_(b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw ConfigError("Beta parameters must be positive and finite");
  }
  log_norm_ = log_beta(a, b);
}

double BetaDistribution::log_pdf(double x) const {
  return (a_ - 1.0) * std::log(x) + (b_ - 1.0) * std::log1p(-x) - log_norm_;
}

double BetaDistribution::pdf(double x) const { return std::exp(log_pdf(x)); }

double BetaDistribution::cdf(double x) const {
  return regularized_incomplete_beta(a_, b_, x, log_norm_);
}

}  // namespace coda
