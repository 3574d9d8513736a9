#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

#include "fatigue/errors.hpp"
#include "fatigue/fatigue_oracle.hpp"

using namespace fatigue;

namespace {

using Key = std::tuple<double, double, double>;  // range, mean, weight

std::vector<Key> keys(const std::vector<CountedCycle>& cycles) {
  std::vector<Key> k;
  for (const auto& c : cycles) k.emplace_back(2.0 * c.amplitude, c.mean, c.weight);
  std::sort(k.begin(), k.end());
  return k;
}

// Reference: repeatedly scan from the start for the first four consecutive
// points whose inner range is bounded by both outer ranges; remove the inner
// pair as a full cycle; what survives counts as half cycles.
std::vector<Key> rescan_reference(std::vector<double> pts) {
  std::vector<Key> out;
  bool removed = true;
  while (removed) {
    removed = false;
    for (std::size_t i = 0; i + 3 < pts.size(); ++i) {
      const double inner = std::abs(pts[i + 1] - pts[i + 2]);
      if (inner <= std::abs(pts[i] - pts[i + 1]) && inner <= std::abs(pts[i + 2] - pts[i + 3])) {
        out.emplace_back(inner, 0.5 * (pts[i + 1] + pts[i + 2]), 1.0);
        pts.erase(pts.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                  pts.begin() + static_cast<std::ptrdiff_t>(i) + 3);
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

void enumerate(std::vector<double>& seq, std::size_t max_len, std::size_t& checked,
               std::size_t& mismatches) {
  if (seq.size() >= 2) {
    ++checked;
    if (keys(rainflow_count(seq)) != rescan_reference(seq)) ++mismatches;
  }
  if (seq.size() == max_len) return;
  for (int v = -3; v <= 3; ++v) {
    const double x = v;
    if (!seq.empty()) {
      if (x == seq.back()) continue;
      if (seq.size() >= 2 && ((x - seq.back() > 0) == (seq.back() - seq[seq.size() - 2] > 0))) {
        continue;
      }
    }
    seq.push_back(x);
    enumerate(seq, max_len, checked, mismatches);
    seq.pop_back();
  }
}

MaterialParams mat1000() { return {1000.0, -0.1, 2000.0}; }

Signal cosine(double amp, double mean, double f, double duration, double fs) {
  Signal s;
  s.sample_rate = fs;
  const auto n = static_cast<std::size_t>(std::llround(duration * fs)) + 1;
  for (std::size_t i = 0; i < n; ++i) {
    s.samples.push_back(mean - amp * std::cos(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs));
  }
  return s;
}

std::vector<double> random_alternating(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.1, 10.0);
  std::vector<double> v{0.0};
  double sign = rng() % 2 ? 1.0 : -1.0;
  for (std::size_t i = 1; i < n; ++i, sign = -sign) v.push_back(v.back() + sign * u(rng));
  return v;
}

}  // namespace

TEST_CASE("exhaustive agreement with the rescan reference") {
  std::vector<double> seq;
  std::size_t checked = 0, mismatches = 0;
  enumerate(seq, 6, checked, mismatches);
  CHECK(checked > 1000);
  CHECK(mismatches == 0);
}

TEST_CASE("standard worked sequence") {
  const std::vector<double> pts = {-2, 1, -3, 5, -1, 3, -4, 4, -2};
  const auto cycles = rainflow_count(pts);
  std::vector<double> full, half;
  for (const auto& c : cycles) (c.weight == 1.0 ? full : half).push_back(2.0 * c.amplitude);
  std::sort(half.begin(), half.end());
  REQUIRE(full.size() == 1);
  CHECK(full[0] == 4.0);
  CHECK(half == std::vector<double>{3, 4, 6, 8, 8, 9});
}

TEST_CASE("monotone ramp is one half cycle") {
  const std::vector<double> pts = {0.0, 10.0};
  const auto c = rainflow_count(pts);
  REQUIRE(c.size() == 1);
  CHECK(c[0].amplitude == 5.0);
  CHECK(c[0].mean == 5.0);
  CHECK(c[0].weight == 0.5);
}

TEST_CASE("periodic signal counts its periods") {
  const auto pts = extract_turning_points(cosine(3.0, 1.0, 2.0, 5.0, 400.0).samples);
  const auto cycles = rainflow_count(pts);
  double weight = 0.0;
  for (const auto& c : cycles) {
    CHECK(c.amplitude == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(c.mean == doctest::Approx(1.0).epsilon(1e-9));
    weight += c.weight;
  }
  CHECK(weight == doctest::Approx(10.0));
}

TEST_CASE("half-cycle conservation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto v = random_alternating(rng, 2 + rng() % 60);
    double w = 0.0;
    for (const auto& c : rainflow_count(v)) w += 2.0 * c.weight;
    CHECK(w == doctest::Approx(static_cast<double>(v.size() - 1)));
  }
}

TEST_CASE("rainflow input validation") {
  const std::vector<double> same = {1.0, 1.0};
  const std::vector<double> mono = {0.0, 1.0, 2.0};
  CHECK_THROWS_AS(rainflow_count(same), Error);
  CHECK_THROWS_AS(rainflow_count(mono), Error);
  CHECK(rainflow_count(std::vector<double>{4.0}).empty());
}

TEST_CASE("basquin life") {
  const MaterialParams m = mat1000();
  CHECK(goodman_factor(0.0, m) == 1.0);
  CHECK(cycles_to_failure(100.0, 0.0, m) == doctest::Approx(1e10).epsilon(1e-12));
  // Half the strength left: same life as twice the amplitude at zero mean.
  CHECK(cycles_to_failure(100.0, 1000.0, m) ==
        doctest::Approx(cycles_to_failure(200.0, 0.0, m)).epsilon(1e-12));
  CHECK(std::isinf(cycles_to_failure(0.0, 0.0, m)));
  try {
    cycles_to_failure(100.0, 2000.0, m);
    FAIL("expected MeanExceedsUts");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MeanExceedsUts);
  }
}

TEST_CASE("miner sum") {
  const MaterialParams m = mat1000();
  CHECK(cumulative_damage({}, m, 0.0) == 0.0);
  std::vector<CountedCycle> seven(7, CountedCycle{100.0, 0.0, 1.0});
  CHECK(cumulative_damage(seven, m, 0.0) == doctest::Approx(7e-10).epsilon(1e-12));
}

TEST_CASE("damage is additive over segments bounded by the global extremes") {
  const MaterialParams m = mat1000();
  const std::vector<double> seg = {-5, 3, -1, 4, -5};
  const std::vector<double> both = {-5, 3, -1, 4, -5, 3, -1, 4, -5};
  const double d1 = cumulative_damage(rainflow_count(seg), m, 0.0);
  const double d2 = cumulative_damage(rainflow_count(both), m, 0.0);
  CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-12));
}

TEST_CASE("failure time of a constant-amplitude cosine") {
  // N_f = 100 cycles at 10 Hz gives 10 s.
  const MaterialParams m = mat1000();
  const double amp = 1000.0 * std::pow(100.0, -0.1);
  const auto ft = failure_time(cosine(amp, 0.0, 10.0, 12.0, 1000.0), m, 0.0);
  CHECK_FALSE(ft.extrapolated);
  CHECK(std::abs(ft.tau - 10.0) <= 0.5 / 10.0);
}

TEST_CASE("extrapolated failure time") {
  // 1e10 cycles at 10 Hz.
  const auto ft = failure_time(cosine(100.0, 0.0, 10.0, 10.0, 1000.0), mat1000(), 0.0);
  CHECK(ft.extrapolated);
  CHECK(ft.tau == doctest::Approx(1e9).epsilon(1e-6));
}

TEST_CASE("larger intensity shortens life") {
  SamplingRanges ranges;
  ranges.duration = 2.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto d = sample_recipe(ranges, seed);
    d.recipe.k_s = 0.3;
    const double t1 = failure_time(synthesize_signal(d.recipe), d.material, d.recipe.x_m).tau;
    d.recipe.k_s = 0.6;
    const double t2 = failure_time(synthesize_signal(d.recipe), d.material, d.recipe.x_m).tau;
    CHECK(t2 < t1);
  }
}

TEST_CASE("negating a zero-mean signal leaves the life unchanged") {
  SamplingRanges ranges;
  ranges.duration = 3.0;
  auto d = sample_recipe(ranges, 17);
  d.recipe.x_m = 0.0;
  Signal s = synthesize_signal(d.recipe);
  const auto a = failure_time(s, d.material, 0.0);
  for (double& v : s.samples) v = -v;
  const auto b = failure_time(s, d.material, 0.0);
  CHECK(b.tau == doctest::Approx(a.tau).epsilon(1e-12));
  CHECK(b.damage_at_end == doctest::Approx(a.damage_at_end).epsilon(1e-12));
}

TEST_CASE("damage never decreases as extrema arrive") {
  const MaterialParams m = mat1000();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    RainflowCounter counter([](double a) { return std::pow(a / 1000.0, 10.0); });
    double last = 0.0;
    for (double e : random_alternating(rng, 80)) {
      counter.push(e * 30.0);
      CHECK(counter.damage() >= last * (1.0 - 1e-12));
      last = counter.damage();
    }
  }
  (void)m;
}

TEST_CASE("streaming counter agrees with batch counting") {
  const MaterialParams m = mat1000();
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto v = random_alternating(rng, 3 + rng() % 40);
    RainflowCounter counter([](double a) { return std::pow(a / 1000.0, 10.0); });
    for (double e : v) counter.push(e);
    CHECK(counter.damage() ==
          doctest::Approx(cumulative_damage(rainflow_count(v), m, 0.0)).epsilon(1e-10));
  }
}

TEST_CASE("no damage and too-short signals") {
  Signal flat;
  flat.sample_rate = 10.0;
  flat.samples.assign(50, 3.0);
  try {
    failure_time(flat, mat1000(), 0.0);
    FAIL("expected TooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
  // (1 / 1e6)^(-100) cycles overflows, so each cycle does no damage.
  const MaterialParams tough{1e6, -0.01, 1e7};
  try {
    failure_time(cosine(1.0, 0.0, 5.0, 2.0, 100.0), tough, 0.0);
    FAIL("expected NoDamage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoDamage);
    CHECK(e.kind() == ErrorKind::NumericalFailure);
  }
}

TEST_CASE("cycle csv export") {
  std::ostringstream os;
  const std::vector<CountedCycle> c = {{1.5, 2.0, 0.5}};
  write_cycles_csv(os, c);
  CHECK(os.str() == "amplitude,mean,weight\n1.5,2,0.5\n");
}
