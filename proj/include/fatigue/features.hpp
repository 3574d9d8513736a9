#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <vector>

#include "fatigue/fatigue_oracle.hpp"
#include "fatigue/material.hpp"
#include "fatigue/signal_gen.hpp"

namespace fatigue {

inline constexpr double kDefaultRho = 0.9;
inline constexpr std::size_t kReducedFeatures = 5;
inline constexpr std::size_t kExtendedFeatures = 9;

/// Running k-th order statistic of |v| where k = ceil(rho * n), kept with two
/// heaps so that each insertion is O(log n) and the query is O(1).
class QuantileTracker {
 public:
  explicit QuantileTracker(double rho = kDefaultRho);

  void insert(double magnitude);
  std::optional<double> value() const;
  double rho() const { return rho_; }
  std::size_t size() const { return lower_.size() + upper_.size(); }

 private:
  std::size_t target() const;

  double rho_;
  std::priority_queue<double> lower_;  // k smallest, max on top
  std::priority_queue<double, std::vector<double>, std::greater<>> upper_;
};

/// Incrementally maintained statistics of a measured stress signal.
///
/// The running mean uses the trapezoidal rule over the samples seen so far.
/// Each confirmed turning point is stored as its offset from the running mean
/// at the moment of confirmation, which keeps every statistic causal.
class StreamState {
 public:
  explicit StreamState(double sample_rate, double min_excursion = 0.0,
                       double tracked_rho = kDefaultRho, bool keep_history = false);

  void update(double x);

  double sample_rate() const { return sample_rate_; }
  std::size_t samples_seen() const { return n_; }
  /// Elapsed time; 0 after the first sample.
  double t() const { return t_; }
  double running_integral() const { return integral_; }
  /// x-bar(t). Equals the first sample until time has advanced.
  double mean() const;

  /// Local extrema of x - x-bar (both peaks and valleys).
  std::span<const double> extrema() const { return extrema_; }
  /// Local maxima only.
  std::span<const double> maxima() const { return maxima_; }

  /// Fast percentile amplitude for the rho fixed at construction.
  std::optional<double> tracked_percentile() const { return tracker_.value(); }
  double tracked_rho() const { return tracker_.rho(); }

  /// Raw samples, only populated when constructed with keep_history.
  const std::vector<double>& history() const { return history_; }
  Signal history_signal() const;

 private:
  double sample_rate_;
  std::size_t n_ = 0;
  double t_ = 0.0;
  double integral_ = 0.0;
  double first_ = 0.0;
  double last_ = 0.0;
  TurningPointDetector detector_;
  std::vector<double> extrema_;
  std::vector<double> maxima_;
  QuantileTracker tracker_;
  bool keep_history_;
  std::vector<double> history_;
};

/// Advances the stream by one sample.
inline void update_stream(StreamState& state, double sample) { state.update(sample); }

struct WelchConfig {
  std::size_t segments = 8;
  double overlap = 0.5;
};

struct SpectralSummary {
  double m0 = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double m4 = 0.0;
  double gamma_bar = 0.0;
};

/// One-sided PSD by Welch averaging (Hann window, constant detrend per
/// segment), followed by trapezoidal spectral moments.
SpectralSummary welch_moments(const Signal& signal_prefix, const WelchConfig& config = {});

/// Fraction of extrema with |m| <= xi.
double extrema_coverage(std::span<const double> extrema, double xi);

/// Smallest |m| whose coverage reaches rho.
double percentile_amplitude(std::span<const double> extrema, double rho);

enum class Band { Narrow, Broad };

/// Inverse of the theoretical extremum-magnitude CDF. Narrow band is the
/// Rayleigh closed form (scale sigma_t); broad band inverts the folded normal
/// with mean mu_t and spread sigma_t by bisection.
double theoretical_percentile(double rho, double mu_t, double sigma_t, Band band);

struct MaximaStats {
  double mean = 0.0;
  double stddev = 0.0;
  double rayleigh_scale = 0.0;  ///< sqrt(2/pi) * mean
};
MaximaStats maxima_statistics(std::span<const double> maxima);

/// Widths used to scale additive feature noise, in feature order
/// {A, b, sigma_uts, x_bar, xi, m0, m1, m2, m4}.
struct FeatureRanges {
  std::array<double, kExtendedFeatures> widths{};

  static FeatureRanges from_sampling_ranges(const SamplingRanges& ranges);
};

struct FeatureVector {
  double t = 0.0;
  std::vector<double> values;

  bool extended() const { return values.size() == kExtendedFeatures; }
};

/// Assembles {A, b, sigma_uts, x_bar, xi} (plus m0, m1, m2, m4 when extended).
/// With noise_frac > 0 each entry receives independent N(0, (noise_frac*width)^2).
FeatureVector build_features(const StreamState& state, const MaterialParams& mat, double rho,
                             bool extended, const std::optional<SpectralSummary>& spectral,
                             double noise_frac, const FeatureRanges& ranges,
                             std::mt19937_64& rng);

/// Adds the same noise model as build_features to an existing vector.
void add_feature_noise(FeatureVector& fv, double noise_frac, const FeatureRanges& ranges,
                       std::mt19937_64& rng);

void write_feature_csv_header(std::ostream& out, bool extended);
void write_feature_csv_row(std::ostream& out, const FeatureVector& fv);

/// End-of-record statistics of one sample, enough to re-evaluate xi at any rho.
struct RhoCase {
  MaterialParams material;
  double x_bar = 0.0;
  std::vector<double> extrema;
  double tau_gt = 0.0;
};

struct RhoScore {
  double rho = 0.0;
  double score = 0.0;  ///< cross-validated RMSE of ln(tau)
};

struct RhoTuning {
  double best_rho = kDefaultRho;
  std::vector<RhoScore> table;
};

/// Scores each rho with a Basquin-shaped least-squares model of ln(tau) under
/// k-fold cross-validation and returns the best one with the full table.
RhoTuning tune_rho(std::span<const RhoCase> subset, std::vector<double> rho_grid,
                   std::size_t folds = 5);

}  // namespace fatigue
