#pragma once

namespace coda {

/// log B(a, b) = lgamma(a) + lgamma(b) - lgamma(a + b). Reentrant.
double log_beta(double a, double b);

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
/// log_norm must equal log_beta(a, b).
double regularized_incomplete_beta(double a, double b, double x, double log_norm);
double regularized_incomplete_beta(double a, double b, double x);

/// Beta(a, b) with the normalizer cached so that pdf/cdf are cheap and
/// safe to call from parallel regions.
class BetaDistribution {
 public:
  BetaDistribution(double a, double b);

  [[nodiscard]] double a() const { return a_; }
  [[nodiscard]] double b() const { return b_; }
  [[nodiscard]] double mean() const { return a_ / (a_ + b_); }

  /// Requires 0 < x < 1.
  [[nodiscard]] double log_pdf(double x) const;
  [[nodiscard]] double pdf(double x) const;
  [[nodiscard]] double cdf(double x) const;

 private:
  double a_;
  double b_;
  double log_norm_;
};

}  // namespace coda
