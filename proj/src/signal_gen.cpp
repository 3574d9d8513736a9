#include "fatigue/signal_gen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "fatigue/errors.hpp"

namespace fatigue {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Rotation recurrences are re-anchored with exact cos/sin this often.
constexpr std::size_t kAnchorStride = 256;

std::size_t sample_count(double duration, double sample_rate) {
  return static_cast<std::size_t>(std::floor(duration * sample_rate + 1e-9)) + 1;
}

// Mean spacing of the sorted frequencies; 1 when there is nothing to space.
double frequency_resolution(std::vector<double> f) {
  if (f.size() < 2) return 1.0;
  std::sort(f.begin(), f.end());
  const double span = f.back() - f.front();
  return span > 0.0 ? span / static_cast<double>(f.size() - 1) : 1.0;
}

void check_alternating(std::span<const double> v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = v[i] - v[i - 1];
    if (d == 0.0) {
      throw Error(ErrorCode::NonAlternatingSequence,
                  "repeated value at index " + std::to_string(i));
    }
    if (i >= 2) {
      const double prev = v[i - 1] - v[i - 2];
      if ((d > 0.0) == (prev > 0.0)) {
        throw Error(ErrorCode::NonAlternatingSequence,
                    "monotone run at index " + std::to_string(i));
      }
    }
  }
}

}  // namespace

void MaterialParams::validate() const {
  if (!(A > 0.0) || !(b < 0.0) || !(sigma_uts > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "material requires A > 0, b < 0, sigma_uts > 0");
  }
}

double SignalRecipe::envelope() const { return k_s * sigma_uts - std::abs(x_m); }

double Signal::duration() const {
  return samples.empty() ? 0.0 : static_cast<double>(samples.size() - 1) / sample_rate;
}

void SamplingRanges::validate() const {
  for (const Range* r : {&A, &b, &sigma_uts, &x_m, &k_s, &frequency, &phase}) {
    if (!(r->hi >= r->lo)) throw Error(ErrorCode::InvalidArgument, "range with hi < lo");
  }
  if (A.lo <= 0.0 || b.hi >= 0.0 || sigma_uts.lo <= 0.0 || k_s.lo <= 0.0 || frequency.lo < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "parameter range outside the physical domain");
  }
  if (k_s.hi * sigma_uts.hi <= x_m.lo) {
    throw Error(ErrorCode::InvalidArgument, "ranges admit no positive envelope");
  }
  if (n_components == 0) throw Error(ErrorCode::EmptyRecipe, "n_components is zero");
  if (!(sample_rate > 2.0 * frequency.hi)) {
    throw Error(ErrorCode::NyquistViolation, "sample_rate must exceed twice the top frequency");
  }
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
}

double gaussian_psd_value(double f, const PsdSpec& spec) {
  const double z = (f - spec.mu_g) / spec.sigma_g;
  return std::exp(-0.5 * z * z) / (std::sqrt(kTwoPi) * spec.sigma_g);
}

Signal synthesize_signal(const SignalRecipe& recipe) {
  const std::size_t nc = recipe.n_components();
  if (nc == 0) throw Error(ErrorCode::EmptyRecipe, "recipe has no Fourier components");
  if (recipe.phases.size() != nc) {
    throw Error(ErrorCode::InvalidArgument, "frequencies and phases differ in length");
  }
  if (!(recipe.psd.sigma_g > 0.0) || recipe.psd.mu_g < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "PSD requires sigma_g > 0 and mu_g >= 0");
  }
  const double f_top = *std::max_element(recipe.frequencies.begin(), recipe.frequencies.end());
  if (!(recipe.sample_rate > 2.0 * f_top)) {
    throw Error(ErrorCode::NyquistViolation, "sample_rate " + std::to_string(recipe.sample_rate) +
                                                 " Hz is not above 2 x " + std::to_string(f_top) +
                                                 " Hz");
  }
  if (!(recipe.k_s > 0.0) || !(recipe.envelope() > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "recipe envelope k_s*sigma_uts - |x_m| must be > 0");
  }
  if (!(recipe.duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be > 0");

  const std::size_t n = sample_count(recipe.duration, recipe.sample_rate);
  const double df = frequency_resolution(recipe.frequencies);
  std::vector<double> sum(n, 0.0);

  for (std::size_t j = 0; j < nc; ++j) {
    const double f = recipe.frequencies[j];
    const double amp = std::sqrt(2.0 * gaussian_psd_value(f, recipe.psd) * df);
    const double w = kTwoPi * f / recipe.sample_rate;
    const double cw = std::cos(w);
    const double sw = std::sin(w);
    for (std::size_t k0 = 0; k0 < n; k0 += kAnchorStride) {
      const double angle = w * static_cast<double>(k0) + recipe.phases[j];
      double c = std::cos(angle);
      double s = std::sin(angle);
      const std::size_t k1 = std::min(n, k0 + kAnchorStride);
      for (std::size_t k = k0; k < k1; ++k) {
        sum[k] += amp * c;
        const double c_next = c * cw - s * sw;
        s = s * cw + c * sw;
        c = c_next;
      }
    }
  }

  double peak = 0.0;
  for (double v : sum) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0)) {
    throw Error(ErrorCode::EmptyRecipe, "all Fourier amplitudes vanish on the sampled grid");
  }

  Signal out;
  out.sample_rate = recipe.sample_rate;
  out.samples.resize(n);
  const double env = recipe.envelope();
  for (std::size_t k = 0; k < n; ++k) out.samples[k] = recipe.x_m + env * (sum[k] / peak);
  return out;
}

RecipeDraw sample_recipe(const SamplingRanges& ranges, std::uint64_t rng_seed) {
  ranges.validate();
  std::mt19937_64 rng(rng_seed);
  auto uniform = [&rng](const Range& r) {
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };

  RecipeDraw draw;
  draw.material.A = uniform(ranges.A);
  draw.material.b = uniform(ranges.b);

  SignalRecipe& rec = draw.recipe;
  do {
    rec.sigma_uts = uniform(ranges.sigma_uts);
    rec.x_m = uniform(ranges.x_m);
    rec.k_s = uniform(ranges.k_s);
  } while (!(rec.k_s * rec.sigma_uts - std::abs(rec.x_m) > 0.0));
  draw.material.sigma_uts = rec.sigma_uts;

  rec.frequencies.resize(ranges.n_components);
  rec.phases.resize(ranges.n_components);
  for (double& f : rec.frequencies) {
    // (lo, hi]: a zero frequency would only add a constant offset.
    f = ranges.frequency.hi - uniform(Range{0.0, ranges.frequency.width()});
  }
  for (double& p : rec.phases) p = uniform(ranges.phase);

  rec.psd = ranges.psd;
  rec.duration = ranges.duration;
  rec.sample_rate = ranges.sample_rate;
  rec.rng_seed = rng_seed;
  return draw;
}

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> values, double knot_spacing)
    : y_(std::move(values)), m_(y_.size(), 0.0), h_(knot_spacing) {
  const std::size_t n = y_.size();
  if (n < 2) throw Error(ErrorCode::TooShort, "spline needs at least two knots");
  if (!(h_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "knot spacing must be positive");
  if (n == 2) return;

  // Thomas algorithm on the interior second derivatives; m_0 = m_{n-1} = 0.
  const std::size_t k = n - 2;
  std::vector<double> diag(k, 4.0), rhs(k);
  for (std::size_t i = 0; i < k; ++i) {
    rhs[i] = 6.0 * (y_[i + 2] - 2.0 * y_[i + 1] + y_[i]) / (h_ * h_);
  }
  for (std::size_t i = 1; i < k; ++i) {
    const double w = 1.0 / diag[i - 1];
    diag[i] -= w;
    rhs[i] -= w * rhs[i - 1];
  }
  m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = (rhs[i] - m_[i + 2]) / diag[i];
}

double NaturalCubicSpline::operator()(double t) const {
  const double last = static_cast<double>(y_.size() - 1);
  const double u = std::clamp(t / h_, 0.0, last);
  std::size_t i = static_cast<std::size_t>(std::floor(u));
  if (i >= y_.size() - 1) i = y_.size() - 2;
  const double a = static_cast<double>(i + 1) - u;  // weight of knot i
  const double b = u - static_cast<double>(i);      // weight of knot i+1
  if (b == 0.0) return y_[i];
  if (a == 0.0) return y_[i + 1];
  const double h2 = h_ * h_ / 6.0;
  return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h2;
}

Signal import_peak_valley(std::span<const double> extrema, double f_max, double oversample,
                          double k_t) {
  if (extrema.size() < 3) {
    throw Error(ErrorCode::TooShort, "need at least 3 extrema, got " +
                                         std::to_string(extrema.size()));
  }
  if (!(f_max > 0.0) || !(oversample >= 2.0) || !(k_t >= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "require f_max > 0, oversample >= 2, k_t >= 1");
  }
  check_alternating(extrema);

  const double spacing = 1.0 / (2.0 * f_max);
  NaturalCubicSpline spline(std::vector<double>(extrema.begin(), extrema.end()), spacing);

  Signal out;
  out.sample_rate = oversample * f_max;
  const double duration = spacing * static_cast<double>(extrema.size() - 1);
  const std::size_t n = sample_count(duration, out.sample_rate);
  out.samples.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.samples[k] = k_t * spline(static_cast<double>(k) / out.sample_rate);
  }
  return out;
}

void write_signal_csv(std::ostream& out, const Signal& signal) {
  out << "t,x\n" << std::setprecision(17);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    out << signal.time_at(i) << ',' << signal.samples[i] << '\n';
  }
}

void write_signal_csv(const std::string& path, const Signal& signal) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_signal_csv(out, signal);
}

Signal read_signal_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("t,x", 0) != 0) {
    throw Error(ErrorCode::Parse, path + ": expected header 't,x'");
  }
  std::vector<double> t, x;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": missing comma");
    }
    try {
      t.push_back(std::stod(line.substr(0, comma)));
      x.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": bad number");
    }
    if (!std::isfinite(x.back())) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": non-finite sample");
    }
  }
  if (x.size() < 2) throw Error(ErrorCode::TooShort, path + ": fewer than two samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw Error(ErrorCode::Parse, path + ": time column is not increasing");
  Signal s;
  s.samples = std::move(x);
  s.sample_rate = 1.0 / dt;
  return s;
}

std::vector<double> read_peak_valley(const std::string& path, double scale) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      values.push_back(scale * std::stod(line.substr(first)));
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return values;
}

nlohmann::json recipe_to_json(const SignalRecipe& r) {
  return {
      {"schema", "recipe/1"},
      {"psd", {{"mu_G", r.psd.mu_g}, {"sigma_G", r.psd.sigma_g}}},
      {"n_components", r.n_components()},
      {"frequencies", r.frequencies},
      {"phases", r.phases},
      {"x_m", r.x_m},
      {"k_s", r.k_s},
      {"sigma_uts", r.sigma_uts},
      {"duration", r.duration},
      {"sample_rate", r.sample_rate},
      {"rng_seed", r.rng_seed},
  };
}

SignalRecipe recipe_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "recipe/1") {
      throw Error(ErrorCode::Parse, "unsupported recipe schema");
    }
    SignalRecipe r;
    r.psd.mu_g = j.at("psd").at("mu_G").get<double>();
    r.psd.sigma_g = j.at("psd").at("sigma_G").get<double>();
    r.frequencies = j.at("frequencies").get<std::vector<double>>();
    r.phases = j.at("phases").get<std::vector<double>>();
    r.x_m = j.at("x_m").get<double>();
    r.k_s = j.at("k_s").get<double>();
    r.sigma_uts = j.at("sigma_uts").get<double>();
    r.duration = j.at("duration").get<double>();
    r.sample_rate = j.at("sample_rate").get<double>();
    r.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.at("n_components").get<std::size_t>() != r.frequencies.size()) {
      throw Error(ErrorCode::Parse, "n_components disagrees with frequency list");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("recipe: ") + e.what());
  }
}

}  // namespace fatigue
