#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fatigue/material.hpp"
#include "fatigue/signal_gen.hpp"

namespace fatigue {

/// Excursions smaller than this fraction of sigma_uts are treated as noise.
inline constexpr double kMinExcursionFraction = 1e-9;

struct CountedCycle {
  double amplitude = 0.0;  ///< half the range, MPa
  double mean = 0.0;       ///< MPa
  double weight = 1.0;     ///< 1.0 full cycle, 0.5 half cycle
};

struct DamageState {
  double D = 0.0;
  double t = 0.0;
};

struct FailureTime {
  double tau = 0.0;             ///< s
  bool extrapolated = false;    ///< true when D never reached 1 inside the signal
  double damage_at_end = 0.0;   ///< D over the whole signal
};

/// A turning point confirmed by the detector.
struct TurningPoint {
  double value = 0.0;
  std::size_t index = 0;  ///< sample index of the extremum
  int direction = 0;      ///< +1 peak, -1 valley, 0 start point
};

/// Streaming turning-point extraction with a hysteresis gate: an extremum is
/// confirmed once the signal has moved back from it by more than
/// `min_excursion`. Plateaus keep their first sample.
class TurningPointDetector {
 public:
  explicit TurningPointDetector(double min_excursion = 0.0) : gate_(min_excursion) {}

  /// Feeds one sample. Returns the extremum confirmed by this sample, if any.
  /// The very first sample is reported as a start point (direction 0).
  std::optional<TurningPoint> push(double x);

  /// The pending extremum of the final, unconfirmed excursion.
  std::optional<TurningPoint> pending() const;

  std::size_t samples_seen() const { return count_; }

 private:
  double gate_;
  std::size_t count_ = 0;
  int dir_ = 0;
  double start_ = 0.0;
  double cand_ = 0.0;
  std::size_t cand_index_ = 0;
};

/// Reduces a sampled history to its turning points, including both
/// endpoints, so the result is ready for rainflow counting.
std::vector<double> extract_turning_points(std::span<const double> samples,
                                           double min_excursion = 0.0);

/// Four-point rainflow counter that accepts extrema one at a time. Closed
/// cycles are reported as they close; what is left on the stack is the
/// residue, which counts as half cycles.
class RainflowCounter {
 public:
  /// Damage contributed by one full cycle of the given amplitude.
  using CycleDamage = std::function<double(double amplitude)>;

  RainflowCounter() = default;
  /// With a damage function the counter also keeps a running Miner sum of
  /// the closed cycles and of the residue (as half cycles).
  explicit RainflowCounter(CycleDamage damage) : damage_(std::move(damage)) {}

  /// Returns the full cycles closed by this extremum (often none).
  std::vector<CountedCycle> push(double extremum);

  std::span<const double> residue() const { return stack_; }
  std::vector<CountedCycle> residue_half_cycles() const;

  /// Damage of closed cycles plus residue half cycles. Zero without a damage function.
  double damage() const { return closed_damage_ + residue_damage_; }

 private:
  double half_damage(double a, double b) const;

  std::vector<double> stack_;
  CycleDamage damage_;
  double closed_damage_ = 0.0;
  double residue_damage_ = 0.0;
};

/// ASTM E1049-85 rainflow counting with the four-point closure rule.
/// Throws NonAlternatingSequence unless successive differences alternate in
/// sign. Fewer than two extrema gives an empty list.
std::vector<CountedCycle> rainflow_count(std::span<const double> extrema);

/// Goodman mean-stress factor 1 - x_m / sigma_uts.
double goodman_factor(double x_m, const MaterialParams& mat);

/// Basquin life with Goodman correction, (S_a / (A * alpha))^(1/b).
/// Zero amplitude returns +inf.
double cycles_to_failure(double amplitude, double x_m, const MaterialParams& mat);

/// Palmgren-Miner sum using the signal-level mean `x_m` for every cycle.
double cumulative_damage(std::span<const CountedCycle> cycles, const MaterialParams& mat,
                         double x_m);

/// Time at which Miner damage of the growing prefix first reaches 1. Damage is
/// re-evaluated at every new extremum, with the current residue counted as
/// half cycles. If the whole signal does not reach D = 1 the stationary rate
/// is extrapolated and the result is flagged.
FailureTime failure_time(const Signal& signal, const MaterialParams& mat, double x_m);

void write_cycles_csv(std::ostream& out, std::span<const CountedCycle> cycles);

}  // namespace fatigue
