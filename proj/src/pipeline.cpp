#include "fatigue/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "fatigue/errors.hpp"
#include "fatigue/fatigue_oracle.hpp"

namespace fatigue {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;

bool at_or_before(double instant, double time) { return instant <= time + 1e-9; }

// Calls f(state, t) at every instant k / f_s (k >= 1) that is covered by the
// signal and not after stop_time, with the state holding samples up to t.
template <class F>
void for_each_instant(const Signal& signal, const MaterialParams& mat, double rho, double f_s,
                      bool keep_history, double stop_time, F&& f) {
  if (!(f_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "prediction rate must be > 0");
  StreamState state(signal.sample_rate, kMinExcursionFraction * mat.sigma_uts, rho, keep_history);
  std::size_t k = 1;
  double next = 1.0 / f_s;
  for (std::size_t i = 0; i < signal.size(); ++i) {
    state.update(signal.samples[i]);
    const double time = static_cast<double>(i) / signal.sample_rate;
    while (at_or_before(next, time)) {
      if (next > stop_time) return;
      f(state, next);
      ++k;
      next = static_cast<double>(k) / f_s;
    }
  }
}

std::optional<FeatureVector> features_now(const StreamState& state, const MaterialParams& mat,
                                          double rho, bool extended, double t) {
  if (state.extrema().empty()) return std::nullopt;
  std::optional<SpectralSummary> spectral;
  if (extended) {
    try {
      spectral = welch_moments(state.history_signal());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::TooShort) return std::nullopt;
      throw;
    }
  }
  std::mt19937_64 unused(0);
  FeatureVector fv = build_features(state, mat, rho, extended, spectral, 0.0, FeatureRanges{}, unused);
  fv.t = t;
  return fv;
}

std::optional<DatasetSample> try_draw(const GenerationConfig& cfg, std::uint64_t seed,
                                      std::size_t& no_damage) {
  SamplingRanges probe_ranges = cfg.ranges;
  probe_ranges.duration = cfg.probe_duration;
  RecipeDraw draw = sample_recipe(probe_ranges, seed);

  FailureTime ft;
  try {
    ft = failure_time(synthesize_signal(draw.recipe), draw.material, draw.recipe.x_m);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoDamage) throw;
    if (++no_damage > cfg.max_no_damage) {
      throw Error(ErrorCode::GenerationFailed,
                  "more than " + std::to_string(cfg.max_no_damage) + " draws accrued no damage");
    }
    return std::nullopt;
  }
  // The probe is a rough estimate; only reject draws that are far outside.
  if (ft.tau < 0.5 * cfg.life_window.lo || ft.tau > 2.0 * cfg.life_window.hi) return std::nullopt;

  // Lengthen until failure happens inside the signal. The normalization
  // depends on the duration, so the life is re-evaluated each time.
  Signal signal;
  for (int it = 0; it < 8; ++it) {
    draw.recipe.duration = std::max(cfg.probe_duration, 1.05 * ft.tau + 1.0);
    signal = synthesize_signal(draw.recipe);
    ft = failure_time(signal, draw.material, draw.recipe.x_m);
    if (!ft.extrapolated || ft.tau > 1.5 * cfg.life_window.hi) break;
  }
  if (ft.extrapolated || !cfg.life_window.contains(ft.tau)) return std::nullopt;

  DatasetSample s;
  s.seed = seed;
  s.recipe = draw.recipe;
  s.material = draw.material;
  s.x_m_true = draw.recipe.x_m;
  s.tau_gt = ft.tau;
  s.clean = feature_trajectory(signal, s.material, cfg.rho, cfg.f_s, cfg.extended, ft.tau);
  if (s.clean.empty()) return std::nullopt;
  return s;
}

DatasetSample draw_sample(const GenerationConfig& cfg, std::uint64_t sample_seed) {
  std::size_t no_damage = 0;
  for (std::size_t attempt = 0; attempt < cfg.max_redraws; ++attempt) {
    if (auto s = try_draw(cfg, derive_seed(sample_seed, attempt), no_damage)) return *s;
  }
  throw Error(ErrorCode::GenerationFailed,
              "no draw within " + std::to_string(cfg.max_redraws) +
                  " attempts had a failure time inside the life window");
}

bool contains(const Prediction& p, double tau) { return p.tau_minus <= tau && tau <= p.tau_plus; }

nlohmann::json range_json(const Range& r) { return {r.lo, r.hi}; }

Range range_from(const nlohmann::json& j, const Range& fallback) {
  if (j.is_null()) return fallback;
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw Error(ErrorCode::Parse, "ranges are [lo, hi] pairs");
  return {v[0], v[1]};
}

std::string trajectory_name(std::size_t id) {
  std::ostringstream os;
  os << "trajectories/sample_" << std::setw(5) << std::setfill('0') << id << ".csv";
  return os.str();
}

std::string signal_name(std::size_t id) {
  std::ostringstream os;
  os << "signals/sample_" << std::setw(5) << std::setfill('0') << id << ".csv";
  return os.str();
}

std::vector<FeatureVector> read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<FeatureVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> cols;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw Error(ErrorCode::Parse, "bad number in " + path);
      cols.push_back(v);
      p = end;
      if (*p == ',') ++p;
    }
    if (cols.size() != 1 + kReducedFeatures && cols.size() != 1 + kExtendedFeatures) {
      throw Error(ErrorCode::Parse, "unexpected column count in " + path);
    }
    FeatureVector fv;
    fv.t = cols[0];
    fv.values.assign(cols.begin() + 1, cols.end());
    out.push_back(std::move(fv));
  }
  return out;
}

}  // namespace

// -- generation ------------------------------------------------------------------

void GenerationConfig::validate() const {
  ranges.validate();
  if (!(f_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "f_s must be > 0");
  if (!(noise_frac >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_frac must be >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorCode::RhoOutOfRange, "rho must be in [0, 1]");
  if (!(life_window.lo > 0.0 && life_window.hi > life_window.lo)) {
    throw Error(ErrorCode::InvalidArgument, "life window must satisfy 0 < lo < hi");
  }
  if (!(probe_duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "probe duration must be > 0");
}

std::vector<FeatureVector> feature_trajectory(const Signal& signal, const MaterialParams& mat,
                                              double rho, double f_s, bool extended,
                                              double stop_time) {
  std::vector<FeatureVector> out;
  for_each_instant(signal, mat, rho, f_s, extended, stop_time,
                   [&](const StreamState& state, double t) {
                     if (auto fv = features_now(state, mat, rho, extended, t)) {
                       out.push_back(std::move(*fv));
                     }
                   });
  return out;
}

Dataset generate_dataset(std::size_t n, const GenerationConfig& config, std::uint64_t master_seed) {
  config.validate();
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "dataset size must be >= 1");
  Dataset d;
  d.config = config;
  d.master_seed = master_seed;
  d.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetSample s = draw_sample(config, derive_seed(master_seed, i));
    s.id = i;
    d.samples.push_back(std::move(s));
  }

  // Noise widths: sampling ranges for the inputs, observed spread for the
  // signal-derived statistics.
  d.noise_widths = FeatureRanges::from_sampling_ranges(config.ranges);
  const std::size_t dim = d.samples.front().clean.front().values.size();
  for (std::size_t c = kReducedFeatures - 1; c < dim; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : d.samples) {
      for (const auto& fv : s.clean) {
        lo = std::min(lo, fv.values[c]);
        hi = std::max(hi, fv.values[c]);
      }
    }
    d.noise_widths.widths[c] = hi - lo;
  }

  for (auto& s : d.samples) {
    std::mt19937_64 rng(derive_seed(derive_seed(master_seed, s.id), kNoiseStream));
    s.trajectory = s.clean;
    for (auto& fv : s.trajectory) add_feature_noise(fv, config.noise_frac, d.noise_widths, rng);
  }
  return d;
}

Signal sample_signal(const DatasetSample& sample) {
  if (!sample.signal_path.empty()) return read_signal_csv(sample.signal_path);
  return synthesize_signal(sample.recipe);
}

Split split_dataset(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t rng_seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return !(r >= 0.0); }) ||
      std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative and sum to 1");
  }
  const auto n_cv = static_cast<std::size_t>(std::llround(ratios[1] * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios[2] * static_cast<double>(n)));
  if (n_cv == 0 || n_test == 0 || n_cv + n_test >= n) {
    throw Error(ErrorCode::DegenerateSplit, "split of " + std::to_string(n) +
                                                " samples leaves a part empty");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(rng_seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
  Split s;
  s.cv.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_cv));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_cv),
                idx.begin() + static_cast<std::ptrdiff_t>(n_cv + n_test));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_cv + n_test), idx.end());
  return s;
}

// -- training --------------------------------------------------------------------

namespace {

const FeatureVector& trajectory_at(const DatasetSample& s, double fraction) {
  if (s.trajectory.empty()) {
    throw Error(ErrorCode::EmptySet, "sample " + std::to_string(s.id) + " has no trajectory");
  }
  const double pos = fraction * static_cast<double>(s.trajectory.size());
  const auto i = static_cast<std::size_t>(std::clamp(std::llround(pos) - 1, 0LL,
                                                     static_cast<long long>(s.trajectory.size()) - 1));
  return s.trajectory[i];
}

void append_rows(const Dataset& data, std::span<const std::size_t> ids, std::size_t per_sample,
                 std::vector<std::vector<double>>& rows, std::vector<double>& targets) {
  for (std::size_t id : ids) {
    const auto& s = data.samples.at(id);
    std::size_t last = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 1; k <= per_sample; ++k) {
      const FeatureVector& fv =
          trajectory_at(s, static_cast<double>(k) / static_cast<double>(per_sample));
      const auto i = static_cast<std::size_t>(&fv - s.trajectory.data());
      if (i == last) continue;
      last = i;
      rows.push_back(fv.values);
      targets.push_back(s.tau_gt);
    }
  }
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, "feature vectors differ in length");
    }
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

}  // namespace

double HybridModel::eta(std::span<const double> features) const { return ann.predict(features); }

std::pair<double, double> HybridModel::prior(std::span<const double> features) const {
  const GpPrediction gp = gpr_predict(gpr, ann.predict_normalized(features));
  const double sn = gpr.hyper().sigma_n;
  const double mu = ann.norm.denormalize_target(gp.mu);
  const double sigma = std::sqrt(gp.var + sn * sn) * ann.norm.target_std;
  return {mu, sigma};
}

HybridModel train_hybrid(const Dataset& data, const Split& split, const HybridConfig& config) {
  if (split.train.empty() || split.cv.empty()) {
    throw Error(ErrorCode::EmptySet, "training and cv splits must be non-empty");
  }
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "validation fraction must be in [0, 1)");
  }
  if (config.instants_per_sample < 1) {
    throw Error(ErrorCode::InvalidArgument, "need at least one instant per sample");
  }

  // Early stopping uses the tail of the (already shuffled) train split.
  std::size_t n_val = static_cast<std::size_t>(
      std::ceil(config.validation_fraction * static_cast<double>(split.train.size())));
  n_val = std::min(n_val, split.train.size() - 1);
  const std::span<const std::size_t> fit_ids(split.train.data(), split.train.size() - n_val);
  const std::span<const std::size_t> val_ids =
      n_val > 0 ? std::span<const std::size_t>(split.train.data() + fit_ids.size(), n_val)
                : fit_ids;

  std::vector<std::vector<double>> fit_rows, val_rows;
  std::vector<double> fit_y, val_y;
  append_rows(data, fit_ids, config.instants_per_sample, fit_rows, fit_y);
  append_rows(data, val_ids, config.instants_per_sample, val_rows, val_y);

  const Eigen::MatrixXd x_fit = to_matrix(fit_rows);
  const Eigen::VectorXd y_fit = Eigen::Map<const Eigen::VectorXd>(
      fit_y.data(), static_cast<Eigen::Index>(fit_y.size()));
  const Eigen::MatrixXd x_val = to_matrix(val_rows);
  const Eigen::VectorXd y_val = Eigen::Map<const Eigen::VectorXd>(
      val_y.data(), static_cast<Eigen::Index>(val_y.size()));

  HybridModel model;
  model.rho = data.config.rho;
  model.f_s = data.config.f_s;
  model.extended = data.config.extended;
  model.split = split;
  model.ann.norm = Normalization::fit(x_fit, y_fit);
  const auto& norm = model.ann.norm;
  Eigen::VectorXd y_fit_n = y_fit, y_val_n = y_val;
  for (auto& v : y_fit_n) v = norm.normalize_target(v);
  for (auto& v : y_val_n) v = norm.normalize_target(v);
  TrainResult tr = ann_train(norm.normalize_inputs(x_fit), y_fit_n, norm.normalize_inputs(x_val),
                             y_val_n, config.ann);
  model.ann.params = tr.params;
  model.ann_train_loss = std::move(tr.train_loss);
  model.ann_val_loss = std::move(tr.val_loss);

  std::vector<double> eta, tau;
  for (std::size_t id : split.cv) {
    const auto& s = data.samples.at(id);
    eta.push_back(model.ann.predict_normalized(trajectory_at(s, config.train_instant_fraction).values));
    tau.push_back(norm.normalize_target(s.tau_gt));
  }
  model.gpr = gpr_fit(eta, tau, config.gpr);
  return model;
}

// -- streaming -------------------------------------------------------------------

std::vector<Prediction> stream_predict(const HybridModel& model, const Signal& signal,
                                       const MaterialParams& mat, const StreamConfig& config) {
  std::mt19937_64 rng(config.noise_seed);
  std::vector<Prediction> out;
  for_each_instant(
      signal, mat, model.rho, config.f_s, model.extended, config.stop_time,
      [&](const StreamState& state, double t) {
        auto fv = features_now(state, mat, model.rho, model.extended, t);
        if (!fv) return;
        add_feature_noise(*fv, config.noise_frac, config.noise_widths, rng);
        const auto [mu, sigma] = model.prior(fv->values);
        try {
          out.push_back(predict_and_interval(TruncatedGaussian{mu, sigma, t}, config.alpha));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::VanishingMass) throw;
          Prediction p;
          p.t = p.tau_pred = p.tau_minus = p.tau_plus = t;
          p.mu = mu;
          p.sigma = sigma;
          p.alpha = config.alpha;
          p.clamped = true;
          p.overdue = true;
          out.push_back(p);
        }
      });
  return out;
}

// -- evaluation ------------------------------------------------------------------

void EvalConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be in (0, 1)");
  if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must be in (0, 1)");
  if (!(r > 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "r must be in (0, 1]");
  if (!(f_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "f_s must be > 0");
}

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Accurate: return "accurate";
    case Outcome::Conservative: return "conservative";
    case Outcome::Nonconservative: return "nonconservative";
  }
  return "unknown";
}

Outcome evaluate_success(std::span<const Prediction> predictions, double tau_gt,
                         const EvalConfig& config) {
  config.validate();
  const double end = config.beta * tau_gt;
  const double start = (1.0 - config.r) * end;
  std::size_t inside = 0, total = 0, above = 0, below = 0;
  const Prediction* checkpoint = nullptr;
  for (const auto& p : predictions) {
    if (p.t < start - 1e-9 || p.t > end + 1e-9) continue;
    ++total;
    if (contains(p, tau_gt)) {
      ++inside;
    } else if (tau_gt > p.tau_plus) {
      ++above;
    } else {
      ++below;
    }
    if (!checkpoint || p.t >= checkpoint->t) checkpoint = &p;
  }
  if (total == 0) {
    throw Error(ErrorCode::WindowUncovered, "no prediction between " + std::to_string(start) +
                                                " s and " + std::to_string(end) + " s");
  }
  if (static_cast<double>(inside) >= config.r * static_cast<double>(total) - 1e-12) {
    return Outcome::Accurate;
  }
  if (tau_gt > checkpoint->tau_plus) return Outcome::Conservative;
  if (tau_gt < checkpoint->tau_minus) return Outcome::Nonconservative;
  return below > above ? Outcome::Nonconservative : Outcome::Conservative;
}

double EvalReport::accuracy() const {
  return total ? static_cast<double>(accurate) / static_cast<double>(total) : 0.0;
}
double EvalReport::conservative_frac() const {
  const std::size_t bad = total - accurate;
  return bad ? static_cast<double>(conservative) / static_cast<double>(bad) : 0.0;
}
double EvalReport::nonconservative_frac() const {
  const std::size_t bad = total - accurate;
  return bad ? static_cast<double>(nonconservative) / static_cast<double>(bad) : 0.0;
}

EvalReport aggregate_metrics(std::span<const Outcome> results) {
  if (results.empty()) throw Error(ErrorCode::EmptyResults, "nothing to aggregate");
  EvalReport r;
  r.total = results.size();
  for (Outcome o : results) {
    switch (o) {
      case Outcome::Accurate: ++r.accurate; break;
      case Outcome::Conservative: ++r.conservative; break;
      case Outcome::Nonconservative: ++r.nonconservative; break;
    }
  }
  return r;
}

std::optional<Prediction> prediction_at(std::span<const Prediction> predictions, double t) {
  std::optional<Prediction> best;
  for (const auto& p : predictions) {
    if (p.t <= t + 1e-9 && (!best || p.t >= best->t)) best = p;
  }
  return best;
}

DatasetEvaluation evaluate_dataset(const HybridModel& model, const Dataset& data,
                                   std::span<const std::size_t> ids, const EvalConfig& config,
                                   bool keep_predictions) {
  config.validate();
  DatasetEvaluation ev;
  std::vector<Outcome> outcomes;
  std::size_t calibrated = 0;
  for (std::size_t id : ids) {
    const auto& s = data.samples.at(id);
    StreamConfig sc;
    sc.alpha = config.alpha;
    sc.f_s = config.f_s;
    sc.stop_time = s.tau_gt;
    auto preds = stream_predict(model, sample_signal(s), s.material, sc);

    SampleEvaluation se;
    se.id = id;
    se.tau_gt = s.tau_gt;
    se.outcome = evaluate_success(preds, s.tau_gt, config);
    const auto late = prediction_at(preds, 0.95 * s.tau_gt);
    se.contained_at_95 = late && contains(*late, s.tau_gt);
    calibrated += se.contained_at_95 ? 1 : 0;
    outcomes.push_back(se.outcome);
    if (keep_predictions) se.predictions = std::move(preds);
    ev.samples.push_back(std::move(se));
  }
  ev.report = aggregate_metrics(outcomes);
  ev.calibration = static_cast<double>(calibrated) / static_cast<double>(ids.size());
  return ev;
}

std::vector<RhoCase> rho_cases(const Dataset& data, std::span<const std::size_t> ids,
                               std::size_t max_extrema) {
  std::vector<RhoCase> out;
  for (std::size_t id : ids) {
    const auto& s = data.samples.at(id);
    const Signal sig = sample_signal(s);
    StreamState state(sig.sample_rate, kMinExcursionFraction * s.material.sigma_uts);
    for (std::size_t i = 0; i < sig.size() && sig.time_at(i) <= s.tau_gt; ++i) {
      state.update(sig.samples[i]);
    }
    RhoCase c;
    c.material = s.material;
    c.x_bar = state.mean();
    c.tau_gt = s.tau_gt;
    const auto ex = state.extrema();
    const std::size_t stride = std::max<std::size_t>(1, (ex.size() + max_extrema - 1) / std::max<std::size_t>(1, max_extrema));
    for (std::size_t i = 0; i < ex.size(); i += stride) c.extrema.push_back(ex[i]);
    if (c.extrema.empty()) continue;
    out.push_back(std::move(c));
  }
  return out;
}

// -- serialization ---------------------------------------------------------------

nlohmann::json generation_config_to_json(const GenerationConfig& c) {
  const auto& r = c.ranges;
  return {
      {"ranges",
       {{"A", range_json(r.A)},
        {"b", range_json(r.b)},
        {"sigma_uts", range_json(r.sigma_uts)},
        {"x_m", range_json(r.x_m)},
        {"k_s", range_json(r.k_s)},
        {"frequency", range_json(r.frequency)},
        {"phase", range_json(r.phase)},
        {"n_components", r.n_components},
        {"psd", {{"mu_g", r.psd.mu_g}, {"sigma_g", r.psd.sigma_g}}},
        {"sample_rate", r.sample_rate}}},
      {"f_s", c.f_s},
      {"noise_frac", c.noise_frac},
      {"rho", c.rho},
      {"extended", c.extended},
      {"life_window", range_json(c.life_window)},
      {"probe_duration", c.probe_duration},
      {"max_redraws", c.max_redraws},
      {"max_no_damage", c.max_no_damage},
  };
}

GenerationConfig generation_config_from_json(const nlohmann::json& j) {
  try {
    GenerationConfig c;
    if (j.contains("ranges")) {
      const auto& r = j.at("ranges");
      auto get = [&](const char* key, const Range& fallback) {
        return r.contains(key) ? range_from(r.at(key), fallback) : fallback;
      };
      c.ranges.A = get("A", c.ranges.A);
      c.ranges.b = get("b", c.ranges.b);
      c.ranges.sigma_uts = get("sigma_uts", c.ranges.sigma_uts);
      c.ranges.x_m = get("x_m", c.ranges.x_m);
      c.ranges.k_s = get("k_s", c.ranges.k_s);
      c.ranges.frequency = get("frequency", c.ranges.frequency);
      c.ranges.phase = get("phase", c.ranges.phase);
      c.ranges.n_components = r.value("n_components", c.ranges.n_components);
      if (r.contains("psd")) {
        c.ranges.psd.mu_g = r.at("psd").value("mu_g", c.ranges.psd.mu_g);
        c.ranges.psd.sigma_g = r.at("psd").value("sigma_g", c.ranges.psd.sigma_g);
      }
      c.ranges.sample_rate = r.value("sample_rate", c.ranges.sample_rate);
    }
    c.f_s = j.value("f_s", c.f_s);
    c.noise_frac = j.value("noise_frac", c.noise_frac);
    c.rho = j.value("rho", c.rho);
    c.extended = j.value("extended", c.extended);
    if (j.contains("life_window")) c.life_window = range_from(j.at("life_window"), c.life_window);
    c.probe_duration = j.value("probe_duration", c.probe_duration);
    c.max_redraws = j.value("max_redraws", c.max_redraws);
    c.max_no_damage = j.value("max_no_damage", c.max_no_damage);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed generation config: ") + e.what());
  }
}

nlohmann::json hybrid_to_json(const HybridModel& m) {
  return {
      {"schema", "hybrid/1"},
      {"ann", ann_to_json(m.ann)},
      {"gpr", gpr_to_json(m.gpr)},
      {"rho", m.rho},
      {"f_s", m.f_s},
      {"extended", m.extended},
      {"split", {{"train", m.split.train}, {"cv", m.split.cv}, {"test", m.split.test}}},
  };
}

HybridModel hybrid_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "hybrid/1") {
      throw Error(ErrorCode::Parse, "unsupported model schema");
    }
    HybridModel m;
    m.ann = ann_from_json(j.at("ann"));
    m.gpr = gpr_from_json(j.at("gpr"));
    m.rho = j.at("rho").get<double>();
    m.f_s = j.at("f_s").get<double>();
    m.extended = j.value("extended", false);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      m.split.train = s.at("train").get<std::vector<std::size_t>>();
      m.split.cv = s.at("cv").get<std::vector<std::size_t>>();
      m.split.test = s.at("test").get<std::vector<std::size_t>>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed model: ") + e.what());
  }
}

nlohmann::json report_to_json(const DatasetEvaluation& ev, const EvalConfig& config) {
  const auto& r = ev.report;
  const std::size_t bad = r.total - r.accurate;
  nlohmann::json samples = nlohmann::json::array();
  std::size_t calibrated = 0;
  for (const auto& s : ev.samples) {
    samples.push_back({{"id", s.id},
                       {"tau_gt", s.tau_gt},
                       {"outcome", to_string(s.outcome)},
                       {"contained_at_95", s.contained_at_95}});
    calibrated += s.contained_at_95 ? 1 : 0;
  }
  return {
      {"schema", "report/1"},
      {"config", {{"alpha", config.alpha}, {"beta", config.beta}, {"r", config.r}, {"f_s", config.f_s}}},
      {"total", r.total},
      {"accuracy", {{"count", r.accurate}, {"fraction", r.accuracy()}}},
      {"inaccurate", bad},
      {"conservative", {{"count", r.conservative}, {"fraction", r.conservative_frac()}}},
      {"nonconservative", {{"count", r.nonconservative}, {"fraction", r.nonconservative_frac()}}},
      {"calibration_at_0_95", {{"count", calibrated}, {"fraction", ev.calibration}}},
      {"samples", samples},
  };
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_dataset(const Dataset& data, const std::string& dir, bool write_signals) {
  fs::create_directories(fs::path(dir) / "trajectories");
  if (write_signals) fs::create_directories(fs::path(dir) / "signals");

  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : data.samples) {
    const std::string traj = trajectory_name(s.id);
    {
      std::ofstream out(fs::path(dir) / traj);
      if (!out) throw Error(ErrorCode::Io, "cannot write " + traj);
      write_feature_csv_header(out, !s.trajectory.empty() && s.trajectory.front().extended());
      for (const auto& fv : s.trajectory) write_feature_csv_row(out, fv);
    }
    nlohmann::json e = {
        {"id", s.id},
        {"seed", s.seed},
        {"recipe", recipe_to_json(s.recipe)},
        {"material", {{"A", s.material.A}, {"b", s.material.b}, {"sigma_uts", s.material.sigma_uts}}},
        {"x_m_true", s.x_m_true},
        {"tau_gt", s.tau_gt},
        {"trajectory", traj},
    };
    if (!s.signal_path.empty()) {
      e["signal"] = s.signal_path;
    } else if (write_signals) {
      const std::string sig = signal_name(s.id);
      write_signal_csv((fs::path(dir) / sig).string(), synthesize_signal(s.recipe));
      e["signal_csv"] = sig;
    }
    samples.push_back(std::move(e));
  }
  std::vector<double> widths(data.noise_widths.widths.begin(), data.noise_widths.widths.end());
  write_json_file((fs::path(dir) / "manifest.json").string(),
                  {{"schema", "manifest/1"},
                   {"master_seed", data.master_seed},
                   {"config", generation_config_to_json(data.config)},
                   {"noise_widths", widths},
                   {"samples", samples}});
}

Dataset read_dataset(const std::string& dir) {
  const nlohmann::json j = read_json_file((fs::path(dir) / "manifest.json").string());
  try {
    if (j.at("schema").get<std::string>() != "manifest/1") {
      throw Error(ErrorCode::Parse, "unsupported manifest schema");
    }
    Dataset d;
    d.master_seed = j.at("master_seed").get<std::uint64_t>();
    d.config = generation_config_from_json(j.at("config"));
    const auto widths = j.at("noise_widths").get<std::vector<double>>();
    std::copy_n(widths.begin(), std::min(widths.size(), d.noise_widths.widths.size()),
                d.noise_widths.widths.begin());
    for (const auto& e : j.at("samples")) {
      DatasetSample s;
      s.id = e.at("id").get<std::size_t>();
      s.seed = e.at("seed").get<std::uint64_t>();
      s.recipe = recipe_from_json(e.at("recipe"));
      const auto& m = e.at("material");
      s.material = {m.at("A").get<double>(), m.at("b").get<double>(),
                    m.at("sigma_uts").get<double>()};
      s.x_m_true = e.at("x_m_true").get<double>();
      s.tau_gt = e.at("tau_gt").get<double>();
      if (e.contains("signal")) s.signal_path = e.at("signal").get<std::string>();
      s.trajectory = read_trajectory_csv((fs::path(dir) / e.at("trajectory").get<std::string>()).string());
      if (s.id != d.samples.size()) throw Error(ErrorCode::Parse, "manifest ids are not 0..n-1");
      d.samples.push_back(std::move(s));
    }
    if (d.samples.empty()) throw Error(ErrorCode::EmptySet, "manifest lists no samples");
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace fatigue
