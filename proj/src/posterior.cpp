#include "fatigue/posterior.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <boost/math/special_functions/erf.hpp>

#include "fatigue/errors.hpp"

namespace fatigue {

namespace {

void check_mass(const TruncatedGaussian& tg) {
  if (tg.t_now > tg.mu + kVanishingSigmas * tg.sigma) {
    throw Error(ErrorCode::VanishingMass,
                "t = " + std::to_string(tg.t_now) + " s lies more than 12 sigma above mu = " +
                    std::to_string(tg.mu) + " s");
  }
}

}  // namespace

void TruncatedGaussian::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma) || !std::isfinite(mu) || !std::isfinite(t_now)) {
    throw Error(ErrorCode::InvalidArgument, "truncated Gaussian needs finite mu, t and sigma > 0");
  }
}

double TruncatedGaussian::upper_mass() const {
  return 0.5 * std::erfc((t_now - mu) / (std::numbers::sqrt2 * sigma));
}

double posterior_pdf(const TruncatedGaussian& tg, double tau) {
  tg.validate();
  check_mass(tg);
  if (tau < tg.t_now) return 0.0;
  const double z = (tau - tg.mu) / tg.sigma;
  const double gauss = std::exp(-0.5 * z * z) / (tg.sigma * std::sqrt(2.0 * std::numbers::pi));
  return gauss / tg.upper_mass();
}

Prediction predict_and_interval(const TruncatedGaussian& tg, double alpha) {
  tg.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1)");
  }
  check_mass(tg);

  Prediction p;
  p.t = tg.t_now;
  p.mu = tg.mu;
  p.sigma = tg.sigma;
  p.alpha = alpha;
  p.tau_pred = std::max(tg.mu, tg.t_now);

  // kappa is taken about mu so that the interval holds mass alpha on both
  // sides of mu; it turns negative once t has passed mu.
  const double q = tg.upper_mass();
  p.kappa = std::erf((tg.mu - tg.t_now) / (std::numbers::sqrt2 * tg.sigma));
  p.gamma = std::numbers::sqrt2 * boost::math::erf_inv(alpha * q);
  // sqrt2 * erfinv(alpha (1 + kappa) - kappa), written via erfc_inv to keep
  // precision when the argument approaches 1.
  p.nu = std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - alpha) * q);

  if (tg.t_now <= tg.mu - p.gamma * tg.sigma) {
    p.tau_minus = tg.mu - p.gamma * tg.sigma;
    p.tau_plus = tg.mu + p.gamma * tg.sigma;
  } else {
    p.clamped = true;
    p.tau_minus = tg.t_now;
    p.tau_plus = std::max(tg.mu + p.nu * tg.sigma, p.tau_pred);
  }
  return p;
}

void write_predictions_csv_header(std::ostream& out) {
  out << "t,tau_pred,tau_minus,tau_plus,mu,sigma,alpha\n";
}

void write_predictions_csv_row(std::ostream& out, const Prediction& p) {
  out << std::setprecision(17) << p.t << ',' << p.tau_pred << ',' << p.tau_minus << ','
      << p.tau_plus << ',' << p.mu << ',' << p.sigma << ',' << p.alpha << '\n';
}

void write_predictions_csv(std::ostream& out, std::span<const Prediction> predictions) {
  write_predictions_csv_header(out);
  for (const auto& p : predictions) write_predictions_csv_row(out, p);
}

}  // namespace fatigue
