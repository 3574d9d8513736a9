#pragma once

#include <cstdint>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fatigue/material.hpp"

namespace fatigue {

/// Gaussian-shaped power spectral density, unit area, no magnitude factor.
struct PsdSpec {
  double mu_g = 150.0;     ///< centre frequency, Hz
  double sigma_g = 500.0;  ///< spread, Hz
};

/// Everything needed to reproduce one synthetic stress history bit for bit.
struct SignalRecipe {
  PsdSpec psd;
  std::vector<double> frequencies;  ///< Hz
  std::vector<double> phases;       ///< rad
  double x_m = 0.0;                 ///< true signal mean, MPa
  double k_s = 0.0;                 ///< intensity scaling factor
  double sigma_uts = 0.0;           ///< MPa
  double duration = 1.0;            ///< s
  double sample_rate = 4000.0;      ///< Hz
  std::uint64_t rng_seed = 0;

  std::size_t n_components() const { return frequencies.size(); }
  /// Half-width of the stress envelope around x_m.
  double envelope() const;
};

/// Uniformly sampled stress history starting at t = 0.
struct Signal {
  std::vector<double> samples;  ///< MPa
  double sample_rate = 1.0;     ///< Hz
  double t0 = 0.0;

  std::size_t size() const { return samples.size(); }
  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) / sample_rate; }
  double duration() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Sampling domain for material and loading parameters.
struct SamplingRanges {
  Range A{1200.0, 1500.0};
  Range b{-0.2, -0.15};
  Range sigma_uts{500.0, 1000.0};
  Range x_m{0.0, 250.0};
  Range k_s{0.05, 0.85};
  Range frequency{0.0, 1000.0};  // drawn on (lo, hi]
  Range phase{0.0, 2.0 * std::numbers::pi};
  std::size_t n_components = 20;
  PsdSpec psd{};
  double sample_rate = 4000.0;
  double duration = 10.0;

  void validate() const;
};

struct RecipeDraw {
  SignalRecipe recipe;
  MaterialParams material;
};

double gaussian_psd_value(double f, const PsdSpec& spec);

/// Builds x(t) = x_m + (k_s*sigma_uts - |x_m|) * chi(t), where chi is the
/// PSD-weighted cosine sum normalised by its largest absolute sample.
Signal synthesize_signal(const SignalRecipe& recipe);

/// Draws one recipe plus material uniformly from `ranges`. Draws with a
/// non-positive envelope are rejected and redrawn.
RecipeDraw sample_recipe(const SamplingRanges& ranges, std::uint64_t rng_seed);

/// Natural cubic spline through equally spaced knots.
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::vector<double> values, double knot_spacing);

  double operator()(double t) const;
  double knot_spacing() const { return h_; }
  std::size_t knots() const { return y_.size(); }

 private:
  std::vector<double> y_;
  std::vector<double> m_;  // second derivatives at knots
  double h_;
};

/// Resamples a peak/valley list onto a uniform grid at `oversample * f_max`,
/// knots spaced 1/(2 f_max) apart, then scales by the stress
/// concentration factor `k_t`.
Signal import_peak_valley(std::span<const double> extrema, double f_max, double oversample,
                          double k_t);

// I/O

void write_signal_csv(std::ostream& out, const Signal& signal);
void write_signal_csv(const std::string& path, const Signal& signal);
Signal read_signal_csv(const std::string& path);
/// One value per line; blank lines and lines starting with '#' are skipped.
std::vector<double> read_peak_valley(const std::string& path, double scale = 1.0);

nlohmann::json recipe_to_json(const SignalRecipe& recipe);
SignalRecipe recipe_from_json(const nlohmann::json& j);

}  // namespace fatigue
