#include "fatigue/features.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <fftw3.h>

#include "fatigue/errors.hpp"

namespace fatigue {

namespace {

// Smallest k with k / n >= rho, clamped to [1, n].
std::size_t rank_for(double rho, std::size_t n) {
  const double x = rho * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(x - 1e-9)));
  return std::clamp<std::size_t>(k, 1, n);
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

// -- QuantileTracker -----------------------------------------------------------

QuantileTracker::QuantileTracker(double rho) : rho_(rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) {
    throw Error(ErrorCode::RhoOutOfRange, "rho must lie in [0, 1]");
  }
}

std::size_t QuantileTracker::target() const { return rank_for(rho_, size()); }

void QuantileTracker::insert(double magnitude) {
  magnitude = std::abs(magnitude);
  if (!lower_.empty() && magnitude <= lower_.top()) {
    lower_.push(magnitude);
  } else {
    upper_.push(magnitude);
  }
  const std::size_t k = target();
  while (lower_.size() > k) {
    upper_.push(lower_.top());
    lower_.pop();
  }
  while (lower_.size() < k && !upper_.empty()) {
    lower_.push(upper_.top());
    upper_.pop();
  }
}

std::optional<double> QuantileTracker::value() const {
  if (lower_.empty()) return std::nullopt;
  return lower_.top();
}

// -- StreamState ---------------------------------------------------------------

StreamState::StreamState(double sample_rate, double min_excursion, double tracked_rho,
                         bool keep_history)
    : sample_rate_(sample_rate),
      detector_(min_excursion),
      tracker_(tracked_rho),
      keep_history_(keep_history) {
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample_rate must be > 0");
}

double StreamState::mean() const {
  if (n_ == 0) return 0.0;
  return t_ > 0.0 ? integral_ / t_ : first_;
}

void StreamState::update(double x) {
  if (n_ == 0) {
    first_ = x;
  } else {
    const double dt = 1.0 / sample_rate_;
    integral_ += 0.5 * (last_ + x) * dt;
    t_ = static_cast<double>(n_) / sample_rate_;
  }
  last_ = x;
  ++n_;
  if (keep_history_) history_.push_back(x);

  if (auto tp = detector_.push(x); tp && tp->direction != 0) {
    const double m = tp->value - mean();
    extrema_.push_back(m);
    tracker_.insert(m);
    if (tp->direction > 0) maxima_.push_back(m);
  }
}

Signal StreamState::history_signal() const {
  Signal s;
  s.samples = history_;
  s.sample_rate = sample_rate_;
  return s;
}

// -- spectral moments -----------------------------------------------------------

SpectralSummary welch_moments(const Signal& signal, const WelchConfig& config) {
  if (config.segments == 0 || !(config.overlap >= 0.0 && config.overlap < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "Welch needs >= 1 segment and overlap in [0, 1)");
  }
  const std::size_t n = signal.size();
  const double k = static_cast<double>(config.segments);
  const auto seg_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(n) / (k - (k - 1.0) * config.overlap)));
  if (seg_len < 16) {
    throw Error(ErrorCode::TooShort, "prefix of " + std::to_string(n) +
                                         " samples is too short for Welch segments");
  }
  const auto step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(seg_len) * (1.0 - config.overlap))));

  // Periodic Hann window.
  std::vector<double> window(seg_len);
  double w2 = 0.0;
  for (std::size_t i = 0; i < seg_len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(seg_len));
    w2 += window[i] * window[i];
  }

  const std::size_t bins = seg_len / 2 + 1;
  std::unique_ptr<double, FftwFree> in(
      static_cast<double*>(fftw_malloc(sizeof(double) * seg_len)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(seg_len), in.get(), out.get(),
                                        FFTW_ESTIMATE);

  std::vector<double> psd(bins, 0.0);
  std::size_t used = 0;
  for (std::size_t start = 0; start + seg_len <= n && used < config.segments; start += step) {
    const double* seg = signal.samples.data() + start;
    const double mu = std::accumulate(seg, seg + seg_len, 0.0) / static_cast<double>(seg_len);
    for (std::size_t i = 0; i < seg_len; ++i) in.get()[i] = (seg[i] - mu) * window[i];
    fftw_execute(plan);
    for (std::size_t b = 0; b < bins; ++b) {
      const double re = out.get()[b][0];
      const double im = out.get()[b][1];
      psd[b] += re * re + im * im;
    }
    ++used;
  }
  fftw_destroy_plan(plan);

  const double scale = 1.0 / (signal.sample_rate * w2 * static_cast<double>(used));
  for (std::size_t b = 0; b < bins; ++b) {
    const bool nyquist = (seg_len % 2 == 0) && b == bins - 1;
    psd[b] *= (b == 0 || nyquist) ? scale : 2.0 * scale;
  }

  const double df = signal.sample_rate / static_cast<double>(seg_len);
  auto moment = [&](int order) {
    double acc = 0.0;
    for (std::size_t b = 1; b < bins; ++b) {
      const double f0 = df * static_cast<double>(b - 1);
      const double f1 = df * static_cast<double>(b);
      acc += 0.5 * (std::pow(f0, order) * psd[b - 1] + std::pow(f1, order) * psd[b]) * df;
    }
    return acc;
  };

  SpectralSummary s;
  s.m0 = moment(0);
  s.m1 = moment(1);
  s.m2 = moment(2);
  s.m4 = moment(4);
  if (!(s.m0 > 0.0) || !(s.m4 > 0.0)) {
    throw Error(ErrorCode::DegenerateSpectrum, "zero spectral power; irregularity undefined");
  }
  s.gamma_bar = s.m2 / std::sqrt(s.m0 * s.m4);
  return s;
}

// -- percentile amplitude -----------------------------------------------------

double extrema_coverage(std::span<const double> extrema, double xi) {
  if (extrema.empty()) throw Error(ErrorCode::EmptyExtrema, "no extrema recorded");
  const auto inside = std::count_if(extrema.begin(), extrema.end(),
                                    [xi](double m) { return std::abs(m) <= xi; });
  return static_cast<double>(inside) / static_cast<double>(extrema.size());
}

double percentile_amplitude(std::span<const double> extrema, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorCode::RhoOutOfRange, "rho must be in [0, 1]");
  if (extrema.empty()) throw Error(ErrorCode::EmptyExtrema, "no extrema recorded");
  std::vector<double> mags(extrema.size());
  std::transform(extrema.begin(), extrema.end(), mags.begin(),
                 [](double m) { return std::abs(m); });
  const std::size_t k = rank_for(rho, mags.size());
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k - 1), mags.end());
  return mags[k - 1];
}

double theoretical_percentile(double rho, double mu_t, double sigma_t, Band band) {
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::RhoOutOfRange, "rho must be in [0, 1)");
  if (!(sigma_t > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_t must be positive");
  if (rho == 0.0) return 0.0;

  if (band == Band::Narrow) return sigma_t * std::sqrt(-2.0 * std::log1p(-rho));

  auto coverage = [&](double xi) {
    return std_normal_cdf((xi + mu_t) / sigma_t) + std_normal_cdf((xi - mu_t) / sigma_t) - 1.0;
  };
  double lo = 0.0;
  double hi = std::abs(mu_t) + sigma_t;
  while (coverage(hi) < rho) hi *= 2.0;
  for (int it = 0; it < 400 && (hi - lo) > 1e-10 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (coverage(mid) < rho ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

MaximaStats maxima_statistics(std::span<const double> maxima) {
  if (maxima.empty()) throw Error(ErrorCode::EmptyExtrema, "no maxima recorded");
  const double n = static_cast<double>(maxima.size());
  const double mean = std::accumulate(maxima.begin(), maxima.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : maxima) ss += (m - mean) * (m - mean);
  MaximaStats s;
  s.mean = mean;
  s.stddev = std::sqrt(ss / n);
  s.rayleigh_scale = std::sqrt(2.0 / std::numbers::pi) * mean;
  return s;
}

// -- feature vectors -----------------------------------------------------------

FeatureRanges FeatureRanges::from_sampling_ranges(const SamplingRanges& r) {
  FeatureRanges out;
  out.widths = {r.A.width(), r.b.width(), r.sigma_uts.width(), r.x_m.width(),
                r.k_s.hi * r.sigma_uts.hi - r.x_m.lo, 0.0, 0.0, 0.0, 0.0};
  return out;
}

void add_feature_noise(FeatureVector& fv, double noise_frac, const FeatureRanges& ranges,
                       std::mt19937_64& rng) {
  if (!(noise_frac > 0.0)) return;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < fv.values.size(); ++i) {
    fv.values[i] += noise_frac * ranges.widths[i] * gauss(rng);
  }
}

FeatureVector build_features(const StreamState& state, const MaterialParams& mat, double rho,
                             bool extended, const std::optional<SpectralSummary>& spectral,
                             double noise_frac, const FeatureRanges& ranges,
                             std::mt19937_64& rng) {
  if (state.extrema().empty()) {
    throw Error(ErrorCode::EmptyExtrema, "no extremum observed yet");
  }
  if (extended && !spectral) {
    throw Error(ErrorCode::InvalidArgument, "extended features need a spectral summary");
  }
  double xi = 0.0;
  if (rho == state.tracked_rho()) {
    xi = *state.tracked_percentile();
  } else {
    xi = percentile_amplitude(state.extrema(), rho);
  }

  FeatureVector fv;
  fv.t = state.t();
  fv.values = {mat.A, mat.b, mat.sigma_uts, state.mean(), xi};
  if (extended) {
    fv.values.insert(fv.values.end(), {spectral->m0, spectral->m1, spectral->m2, spectral->m4});
  }
  add_feature_noise(fv, noise_frac, ranges, rng);
  return fv;
}

void write_feature_csv_header(std::ostream& out, bool extended) {
  out << "t,A,b,sigma_uts,x_bar,xi";
  if (extended) out << ",m0,m1,m2,m4";
  out << '\n';
}

void write_feature_csv_row(std::ostream& out, const FeatureVector& fv) {
  out << std::setprecision(17) << fv.t;
  for (double v : fv.values) out << ',' << v;
  out << '\n';
}

// -- rho tuning ------------------------------------------------------------------

namespace {

// ln N = (ln S - ln A - ln alpha) / b, so ln(tau) is linear in these terms.
Eigen::VectorXd basquin_design_row(const RhoCase& c, double xi) {
  const double inv_b = 1.0 / c.material.b;
  const double alpha = std::max(1e-6, 1.0 - c.x_bar / c.material.sigma_uts);
  const double log_xi = std::log(std::max(xi, 1e-12));
  Eigen::VectorXd row(6);
  row << 1.0, inv_b, log_xi * inv_b, std::log(c.material.A) * inv_b, std::log(alpha) * inv_b,
      log_xi;
  return row;
}

}  // namespace

RhoTuning tune_rho(std::span<const RhoCase> subset, std::vector<double> rho_grid,
                   std::size_t folds) {
  if (subset.empty()) throw Error(ErrorCode::EmptySet, "rho tuning needs at least one case");
  if (rho_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty rho grid");
  for (double r : rho_grid) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::RhoOutOfRange, "rho outside [0, 1]");
  }
  std::sort(rho_grid.begin(), rho_grid.end());
  rho_grid.erase(std::unique(rho_grid.begin(), rho_grid.end()), rho_grid.end());

  const std::size_t n = subset.size();
  folds = std::clamp<std::size_t>(folds, 1, n);
  const double ridge = 1e-8;

  RhoTuning result;
  double best = std::numeric_limits<double>::infinity();
  for (double rho : rho_grid) {
    Eigen::MatrixXd X(n, 6);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      X.row(static_cast<Eigen::Index>(i)) =
          basquin_design_row(subset[i], percentile_amplitude(subset[i].extrema, rho)).transpose();
      y(static_cast<Eigen::Index>(i)) = std::log(subset[i].tau_gt);
    }

    double sse = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> fit, held;
      for (std::size_t i = 0; i < n; ++i) {
        ((folds > 1 && i % folds == f) ? held : fit).push_back(static_cast<Eigen::Index>(i));
      }
      if (held.empty()) held = fit;  // single fold: score the training fit
      Eigen::MatrixXd Xf = X(fit, Eigen::all);
      Eigen::VectorXd yf = y(fit);
      Eigen::MatrixXd normal = Xf.transpose() * Xf;
      normal.diagonal().array() += ridge * (1.0 + normal.diagonal().array());
      const Eigen::VectorXd coef = normal.ldlt().solve(Xf.transpose() * yf);
      const Eigen::VectorXd resid = y(held) - X(held, Eigen::all) * coef;
      sse += resid.squaredNorm();
    }
    const double score = std::sqrt(sse / static_cast<double>(n));
    result.table.push_back({rho, score});
    if (score < best) {
      best = score;
      result.best_rho = rho;
    }
  }
  return result;
}

}  // namespace fatigue
