#pragma once

#include <iosfwd>
#include <span>

namespace fatigue {

/// Tails beyond this many standard deviations leave no usable posterior mass.
inline constexpr double kVanishingSigmas = 12.0;

/// Gaussian failure-time prior N(mu, sigma^2) restricted to tau >= t_now.
struct TruncatedGaussian {
  double mu = 0.0;     ///< s
  double sigma = 1.0;  ///< s
  double t_now = 0.0;  ///< s

  void validate() const;
  /// Prior mass above t_now, 1 - Phi((t_now - mu) / sigma).
  double upper_mass() const;
};

struct Prediction {
  double t = 0.0;
  double tau_pred = 0.0;
  double tau_minus = 0.0;
  double tau_plus = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double alpha = 0.0;
  double kappa = 0.0;
  double gamma = 0.0;
  double nu = 0.0;
  bool clamped = false;  ///< interval starts at t_now
  bool overdue = false;  ///< prior mass above t_now vanished; bounds collapse to t
};

/// Posterior density; zero below t_now. Throws VanishingMass once
/// t_now > mu + 12 sigma.
double posterior_pdf(const TruncatedGaussian& tg, double tau);

/// Posterior mode and an interval of posterior mass alpha. While t_now sits
/// at least gamma*sigma below mu the interval is mu -/+ gamma*sigma;
/// afterwards it is [t_now, mu + nu*sigma].
Prediction predict_and_interval(const TruncatedGaussian& tg, double alpha);

void write_predictions_csv_header(std::ostream& out);
void write_predictions_csv_row(std::ostream& out, const Prediction& p);
void write_predictions_csv(std::ostream& out, std::span<const Prediction> predictions);

}  // namespace fatigue
