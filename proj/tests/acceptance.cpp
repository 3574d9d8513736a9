// End-to-end acceptance run. One PASS/FAIL line per criterion; exit status
// is non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "fatigue/ann.hpp"
#include "fatigue/errors.hpp"
#include "fatigue/fatigue_oracle.hpp"
#include "fatigue/features.hpp"
#include "fatigue/gpr.hpp"
#include "fatigue/pipeline.hpp"
#include "fatigue/posterior.hpp"
#include "fatigue/signal_gen.hpp"

using namespace fatigue;

namespace {

// Tolerances and budgets.
constexpr double kGradRelTol = 1e-5;
constexpr double kMassTol = 1e-6;
constexpr double kContinuityTol = 1e-8;  // in units of sigma
constexpr double kPercentileTol = 0.05;
constexpr double kFlatGammaTol = 0.10;
constexpr double kToneGamma = 0.99;
constexpr double kParsevalTol = 0.05;
constexpr double kAccuracyTarget = 0.70;
constexpr double kCalibrationTarget = 0.95;
constexpr double kCalibrationBand = 0.07;
constexpr double kOracleBudget = 60.0;      // s
constexpr double kGradientBudget = 60.0;    // s
constexpr double kPercentileBudget = 120.0; // s
constexpr double kPipelineBudget = 900.0;   // s

constexpr std::size_t kDatasetSize = 300;
constexpr std::uint64_t kMasterSeed = 1;

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// -- 1: rainflow against a rescan reference -----------------------------------

using Key = std::tuple<double, double, double>;

std::vector<Key> rescan_reference(std::vector<double> pts) {
  std::vector<Key> out;
  for (bool removed = true; removed;) {
    removed = false;
    for (std::size_t i = 0; i + 3 < pts.size(); ++i) {
      const double inner = std::abs(pts[i + 1] - pts[i + 2]);
      if (inner <= std::abs(pts[i] - pts[i + 1]) && inner <= std::abs(pts[i + 2] - pts[i + 3])) {
        out.emplace_back(inner, 0.5 * (pts[i + 1] + pts[i + 2]), 1.0);
        pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(i + 1),
                  pts.begin() + static_cast<std::ptrdiff_t>(i + 3));
        removed = true;
        break;
      }
    }
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    out.emplace_back(std::abs(pts[i] - pts[i - 1]), 0.5 * (pts[i] + pts[i - 1]), 0.5);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Key> counted(std::span<const double> pts) {
  std::vector<Key> k;
  for (const auto& c : rainflow_count(pts)) k.emplace_back(2.0 * c.amplitude, c.mean, c.weight);
  std::sort(k.begin(), k.end());
  return k;
}

void walk(std::vector<double>& seq, std::size_t& checked, std::size_t& agree) {
  if (seq.size() >= 2) {
    ++checked;
    agree += counted(seq) == rescan_reference(seq);
  }
  if (seq.size() == 6) return;
  for (int v = -3; v <= 3; ++v) {
    const double x = v;
    if (!seq.empty() && x == seq.back()) continue;
    if (seq.size() >= 2 && (x > seq.back()) == (seq.back() > seq[seq.size() - 2])) continue;
    seq.push_back(x);
    walk(seq, checked, agree);
    seq.pop_back();
  }
}

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> seq;
  std::size_t checked = 0, agree = 0;
  walk(seq, checked, agree);

  const std::vector<double> astm = {-2, 1, -3, 5, -1, 3, -4, 4, -2};
  std::vector<double> full, half;
  for (const auto& c : rainflow_count(astm)) (c.weight == 1.0 ? full : half).push_back(2.0 * c.amplitude);
  std::sort(half.begin(), half.end());
  const bool astm_ok = full == std::vector<double>{4.0} && half == std::vector<double>{3, 4, 6, 8, 8, 9};
  const double secs = seconds_since(t0);
  report(1, "oracle correctness", agree == checked && astm_ok && secs < kOracleBudget,
         fmt("%zu/%zu sequences agree, standard sequence %s, %.2f s", agree, checked,
             astm_ok ? "ok" : "wrong", secs));
}

// -- 2: gradient checks ---------------------------------------------------------

double rel_err(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
  return (analytic - fd).norm() / std::max(fd.norm(), 1e-300);
}

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_ann = 0.0, worst_gp = 0.0;

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = trial % 2 ? kExtendedFeatures : kReducedFeatures;
    AnnParams p = ann_init(in, rng());
    p.b1 = Eigen::VectorXd::NullaryExpr(kHiddenUnits, [&] { return 0.3 * g(rng); });
    p.b2 = g(rng);
    const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(16, in, [&] { return g(rng); });
    const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(16, [&] { return g(rng); });
    const double lambda = 1e-3;
    const auto lg = ann_loss_and_gradient(p, x, y, lambda);
    const Eigen::VectorXd theta = p.flatten();
    Eigen::VectorXd fd(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd tp = theta, tm = theta;
      tp(k) += h;
      tm(k) -= h;
      fd(k) = (ann_loss_and_gradient(AnnParams::unflatten(tp, in), x, y, lambda).loss -
               ann_loss_and_gradient(AnnParams::unflatten(tm, in), x, y, lambda).loss) /
              (2.0 * h);
    }
    worst_ann = std::max(worst_ann, rel_err(lg.gradient, fd));
  }

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> eta(20), tau(20);
    for (double& e : eta) e = 3.0 * g(rng);
    for (std::size_t i = 0; i < eta.size(); ++i) tau[i] = std::sin(eta[i]) + 0.2 * g(rng);
    const std::array<double, 3> logs = {std::log(0.3) + u(rng), u(rng), u(rng)};
    const auto r = log_marginal_likelihood_and_gradient(GprHyper::from_log(logs), eta, tau);
    Eigen::VectorXd an(3), fd(3);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      auto lp = logs, lm = logs;
      lp[k] += h;
      lm[k] -= h;
      fd(k) = (log_marginal_likelihood_and_gradient(GprHyper::from_log(lp), eta, tau).lml -
               log_marginal_likelihood_and_gradient(GprHyper::from_log(lm), eta, tau).lml) /
              (2.0 * h);
      an(k) = r.gradient[k];
    }
    worst_gp = std::max(worst_gp, rel_err(an, fd));
  }
  const double secs = seconds_since(t0);
  report(2, "gradient checks",
         worst_ann <= kGradRelTol && worst_gp <= kGradRelTol && secs < kGradientBudget,
         fmt("worst relative error ANN %.2e, GP %.2e over 100 configurations each, %.2f s",
             worst_ann, worst_gp, secs));
}

// -- 3: interval mass, continuity, shrinkage --------------------------------------

void criterion_3() {
  using boost::math::quadrature::gauss_kronrod;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_mass = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = 30.0 + 270.0 * u(rng);
    const double sigma = 1.0 + 49.0 * u(rng);
    const double t = mu + sigma * (-8.0 + 16.0 * u(rng));
    const double alpha = 0.5 + 0.49 * u(rng);
    const TruncatedGaussian tg{mu, sigma, t};
    const auto p = predict_and_interval(tg, alpha);
    const double m = gauss_kronrod<double, 61>::integrate(
        [&](double x) { return posterior_pdf(tg, x); }, p.tau_minus, p.tau_plus, 20, 1e-13);
    worst_mass = std::max(worst_mass, std::abs(m - alpha));
  }

  // Switch point by bisection on the branch flag.
  const double mu = 150.0, sigma = 20.0, alpha = 0.9;
  double lo = 0.0, hi = mu;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (predict_and_interval({mu, sigma, mid}, alpha).clamped ? hi : lo) = mid;
  }
  const auto left = predict_and_interval({mu, sigma, lo}, alpha);
  const auto right = predict_and_interval({mu, sigma, hi}, alpha);
  const double jump = std::max(std::abs(left.tau_minus - right.tau_minus),
                               std::abs(left.tau_plus - right.tau_plus)) / sigma;

  bool monotone = true;
  double width = std::numeric_limits<double>::infinity();
  std::size_t clamped = 0;
  for (double t = 0.0; t <= mu + 11.0 * sigma; t += 0.25) {
    const auto p = predict_and_interval({mu, sigma, t}, alpha);
    if (!p.clamped) continue;
    ++clamped;
    const double w = p.tau_plus - p.tau_minus;
    if (w > width + 1e-9) monotone = false;
    width = w;
  }
  report(3, "closed-form interval fidelity",
         worst_mass <= kMassTol && jump <= kContinuityTol && monotone && clamped > 0,
         fmt("worst |mass - alpha| %.2e over 1000 tuples, switch jump %.2e sigma, clamped widths "
             "%s over %zu instants",
             worst_mass, jump, monotone ? "non-increasing" : "INCREASE", clamped));
}

// -- 4: percentile amplitude theory ----------------------------------------------

struct PercentileCheck {
  std::size_t extrema = 0;
  double empirical = 0.0;
  double theory = 0.0;
};

PercentileCheck percentile_check(const SamplingRanges& ranges, std::uint64_t seed, Band band) {
  const auto d = sample_recipe(ranges, seed);
  const Signal s = synthesize_signal(d.recipe);
  StreamState st(s.sample_rate);
  for (double x : s.samples) st.update(x);
  const auto ms = maxima_statistics(st.maxima());
  PercentileCheck c;
  c.extrema = st.extrema().size();
  c.empirical = percentile_amplitude(st.extrema(), 0.9);
  c.theory = band == Band::Narrow ? theoretical_percentile(0.9, 0.0, ms.rayleigh_scale, Band::Narrow)
                                  : theoretical_percentile(0.9, ms.mean, ms.stddev, Band::Broad);
  return c;
}

void criterion_4() {
  const auto t0 = std::chrono::steady_clock::now();
  SamplingRanges nb;
  nb.psd = {500.0, 20.0};
  nb.frequency = {500.0 - 4.0 * 20.0, 500.0 + 4.0 * 20.0};
  nb.n_components = 200;
  nb.sample_rate = 20000.0;
  nb.duration = 30.0;
  SamplingRanges bb;
  bb.n_components = 2000;
  bb.duration = 30.0;
  const auto n = percentile_check(nb, 41, Band::Narrow);
  const auto b = percentile_check(bb, 42, Band::Broad);
  const double en = std::abs(n.empirical / n.theory - 1.0);
  const double eb = std::abs(b.empirical / b.theory - 1.0);
  const double secs = seconds_since(t0);
  report(4, "percentile amplitude theory",
         n.extrema >= 10000 && b.extrema >= 10000 && en <= kPercentileTol && eb <= kPercentileTol &&
             secs < kPercentileBudget,
         fmt("NB xi90 %.4g vs %.4g (%.2f%%, %zu extrema); BB xi90 %.4g vs %.4g (%.2f%%, %zu "
             "extrema); %.1f s",
             n.empirical, n.theory, 100.0 * en, n.extrema, b.empirical, b.theory, 100.0 * eb,
             b.extrema, secs));
}

// -- 5: spectral moments -----------------------------------------------------------

void criterion_5() {
  SamplingRanges flat;
  flat.psd = {0.0, 1e6};  // effectively constant over [0, 1000] Hz
  flat.n_components = 2000;
  flat.duration = 30.0;
  const auto d = sample_recipe(flat, 5);
  const auto sf = welch_moments(synthesize_signal(d.recipe));
  const double target = std::sqrt(5.0) / 3.0;
  const double ef = std::abs(sf.gamma_bar / target - 1.0);

  SignalRecipe tone;
  tone.frequencies = {200.0};
  tone.phases = {0.7};
  tone.x_m = 0.0;
  tone.sigma_uts = 500.0;
  tone.k_s = 0.2;  // amplitude 100 MPa
  tone.duration = 10.0;
  tone.sample_rate = 4000.0;
  const auto st = welch_moments(synthesize_signal(tone));
  const double a = tone.envelope();
  const double ep = std::abs(st.m0 / (a * a / 2.0) - 1.0);
  report(5, "spectral moments", ef <= kFlatGammaTol && st.gamma_bar >= kToneGamma && ep <= kParsevalTol,
         fmt("flat gamma %.4f vs %.4f (%.2f%%); tone gamma %.5f, m0 %.2f vs %.2f (%.2f%%)",
             sf.gamma_bar, target, 100.0 * ef, st.gamma_bar, st.m0, a * a / 2.0, 100.0 * ep));
}

// -- 6 to 10: pipeline ---------------------------------------------------------

struct PipelineRun {
  Dataset data;
  HybridModel model;
  DatasetEvaluation eval;
  std::string model_dump;
  std::string report_dump;
  double seconds = 0.0;
};

PipelineRun run_pipeline(const EvalConfig& ec, bool keep_predictions) {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineRun r;
  r.data = generate_dataset(kDatasetSize, GenerationConfig{}, kMasterSeed);
  const Split split = split_dataset(kDatasetSize, {0.6, 0.2, 0.2}, kMasterSeed);
  HybridConfig hc;
  hc.ann.rng_seed = derive_seed(kMasterSeed, 1);
  hc.gpr.rng_seed = derive_seed(kMasterSeed, 2);
  r.model = train_hybrid(r.data, split, hc);
  r.eval = evaluate_dataset(r.model, r.data, split.test, ec, keep_predictions);
  r.model_dump = hybrid_to_json(r.model).dump(2);
  r.report_dump = report_to_json(r.eval, ec).dump(2);
  r.seconds = seconds_since(t0);
  return r;
}

void pipeline_criteria() {
  const EvalConfig ec;  // alpha 0.95, beta 0.6, r 0.75, f_s 1
  PipelineRun run;
  try {
    run = run_pipeline(ec, true);
  } catch (const Error& e) {
    for (int id = 6; id <= 10; ++id) report(id, "pipeline", false, std::string("error: ") + e.what());
    return;
  }
  const auto& rep = run.eval.report;
  const bool partition = rep.accurate + rep.conservative + rep.nonconservative == rep.total;
  report(6, "desk-scale pipeline accuracy",
         rep.accuracy() >= kAccuracyTarget && partition && run.seconds <= kPipelineBudget,
         fmt("accuracy %.3f (%zu/%zu), conservative %zu, nonconservative %zu, %.0f s",
             rep.accuracy(), rep.accurate, rep.total, rep.conservative, rep.nonconservative,
             run.seconds));

  report(7, "calibration at 0.95 tau",
         std::abs(run.eval.calibration - kCalibrationTarget) <= kCalibrationBand,
         fmt("%.3f of test samples contain tau_gt (target %.2f +/- %.2f)", run.eval.calibration,
             kCalibrationTarget, kCalibrationBand));

  EvalConfig late = ec;
  late.beta = 0.95;
  std::vector<Outcome> outcomes;
  for (const auto& s : run.eval.samples) outcomes.push_back(evaluate_success(s.predictions, s.tau_gt, late));
  const auto late_rep = aggregate_metrics(outcomes);
  report(8, "earliness monotonicity", late_rep.accuracy() >= rep.accuracy(),
         fmt("accuracy %.3f at beta 0.95 vs %.3f at beta 0.6", late_rep.accuracy(), rep.accuracy()));

  bool identical = false;
  std::string detail;
  try {
    const PipelineRun again = run_pipeline(ec, false);
    identical = again.model_dump == run.model_dump && again.report_dump == run.report_dump;
    detail = fmt("model %zu bytes, report %zu bytes, %s", run.model_dump.size(),
                 run.report_dump.size(), identical ? "byte-identical" : "DIFFER");
  } catch (const Error& e) {
    detail = std::string("error: ") + e.what();
  }
  report(9, "determinism", identical, detail);

  const auto& first = run.eval.samples.front();
  const auto& preds = first.predictions;
  const auto at95 = prediction_at(preds, 0.95 * first.tau_gt);
  const auto at100 = prediction_at(preds, first.tau_gt);
  auto holds = [&](const std::optional<Prediction>& p) {
    return p && p->tau_minus <= first.tau_gt && first.tau_gt <= p->tau_plus;
  };
  const double w0 = preds.empty() ? 0.0 : preds.front().tau_plus - preds.front().tau_minus;
  const double w95 = at95 ? at95->tau_plus - at95->tau_minus : 0.0;
  report(10, "held-out signal behaviour", holds(at95) && holds(at100) && at95 && w95 < w0,
         fmt("sample %zu tau_gt %.2f s: contained at 95%% %s, at 100%% %s; width %.2f s at first "
             "capture (t = %.0f s), %.2f s at 95%%",
             first.id, first.tau_gt, holds(at95) ? "yes" : "no", holds(at100) ? "yes" : "no", w0,
             preds.empty() ? 0.0 : preds.front().t, w95));
}

}  // namespace

int main() {
  try {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    pipeline_criteria();
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
