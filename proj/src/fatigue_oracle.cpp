#include "fatigue/fatigue_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "fatigue/errors.hpp"

namespace fatigue {

std::optional<TurningPoint> TurningPointDetector::push(double x) {
  const std::size_t i = count_++;
  if (i == 0) {
    start_ = x;
    cand_ = x;
    cand_index_ = 0;
    return TurningPoint{x, 0, 0};
  }
  if (dir_ == 0) {
    if (x - start_ > gate_) {
      dir_ = +1;
      cand_ = x;
      cand_index_ = i;
    } else if (start_ - x > gate_) {
      dir_ = -1;
      cand_ = x;
      cand_index_ = i;
    }
    return std::nullopt;
  }
  if (dir_ > 0) {
    if (x > cand_) {
      cand_ = x;
      cand_index_ = i;
    } else if (cand_ - x > gate_) {
      const TurningPoint tp{cand_, cand_index_, +1};
      dir_ = -1;
      cand_ = x;
      cand_index_ = i;
      return tp;
    }
  } else {
    if (x < cand_) {
      cand_ = x;
      cand_index_ = i;
    } else if (x - cand_ > gate_) {
      const TurningPoint tp{cand_, cand_index_, -1};
      dir_ = +1;
      cand_ = x;
      cand_index_ = i;
      return tp;
    }
  }
  return std::nullopt;
}

std::optional<TurningPoint> TurningPointDetector::pending() const {
  if (dir_ == 0) return std::nullopt;
  return TurningPoint{cand_, cand_index_, dir_};
}

std::vector<double> extract_turning_points(std::span<const double> samples,
                                           double min_excursion) {
  TurningPointDetector det(min_excursion);
  std::vector<double> out;
  for (double x : samples) {
    if (auto tp = det.push(x)) out.push_back(tp->value);
  }
  if (auto tp = det.pending()) out.push_back(tp->value);
  return out;
}

double RainflowCounter::half_damage(double a, double b) const {
  return 0.5 * damage_(0.5 * std::abs(a - b));
}

std::vector<CountedCycle> RainflowCounter::push(double extremum) {
  std::vector<CountedCycle> closed;
  if (damage_ && !stack_.empty()) residue_damage_ += half_damage(stack_.back(), extremum);
  stack_.push_back(extremum);
  while (stack_.size() >= 4) {
    const std::size_t n = stack_.size();
    const double p1 = stack_[n - 4], p2 = stack_[n - 3], p3 = stack_[n - 2], p4 = stack_[n - 1];
    const double inner = std::abs(p2 - p3);
    if (!(inner <= std::abs(p1 - p2) && inner <= std::abs(p3 - p4))) break;
    closed.push_back({0.5 * inner, 0.5 * (p2 + p3), 1.0});
    if (damage_) {
      residue_damage_ += half_damage(p1, p4) - half_damage(p1, p2) - half_damage(p2, p3) -
                         half_damage(p3, p4);
      closed_damage_ += damage_(0.5 * inner);
    }
    stack_[n - 3] = p4;
    stack_.resize(n - 2);
  }
  return closed;
}

std::vector<CountedCycle> RainflowCounter::residue_half_cycles() const {
  std::vector<CountedCycle> out;
  for (std::size_t i = 1; i < stack_.size(); ++i) {
    out.push_back({0.5 * std::abs(stack_[i] - stack_[i - 1]),
                   0.5 * (stack_[i] + stack_[i - 1]), 0.5});
  }
  return out;
}

std::vector<CountedCycle> rainflow_count(std::span<const double> extrema) {
  for (std::size_t i = 1; i < extrema.size(); ++i) {
    const double d = extrema[i] - extrema[i - 1];
    const bool flat = d == 0.0;
    const bool same_way = i >= 2 && ((d > 0.0) == (extrema[i - 1] - extrema[i - 2] > 0.0));
    if (flat || same_way) {
      throw Error(ErrorCode::NonAlternatingSequence,
                  "extrema do not alternate at index " + std::to_string(i));
    }
  }
  if (extrema.size() < 2) return {};

  RainflowCounter counter;
  std::vector<CountedCycle> cycles;
  for (double e : extrema) {
    auto closed = counter.push(e);
    cycles.insert(cycles.end(), closed.begin(), closed.end());
  }
  auto half = counter.residue_half_cycles();
  cycles.insert(cycles.end(), half.begin(), half.end());
  return cycles;
}

double goodman_factor(double x_m, const MaterialParams& mat) {
  if (x_m >= mat.sigma_uts) {
    throw Error(ErrorCode::MeanExceedsUts, "mean stress " + std::to_string(x_m) +
                                               " MPa reaches sigma_uts " +
                                               std::to_string(mat.sigma_uts) + " MPa");
  }
  return 1.0 - x_m / mat.sigma_uts;
}

double cycles_to_failure(double amplitude, double x_m, const MaterialParams& mat) {
  mat.validate();
  const double alpha = goodman_factor(x_m, mat);
  if (amplitude < 0.0) throw Error(ErrorCode::InvalidArgument, "negative amplitude");
  if (amplitude == 0.0) return std::numeric_limits<double>::infinity();
  return std::pow(amplitude / (mat.A * alpha), 1.0 / mat.b);
}

double cumulative_damage(std::span<const CountedCycle> cycles, const MaterialParams& mat,
                         double x_m) {
  mat.validate();
  const double alpha = goodman_factor(x_m, mat);
  const double strength = mat.A * alpha;
  const double inv_b = 1.0 / mat.b;
  double d = 0.0;
  for (const auto& c : cycles) {
    if (c.amplitude > 0.0) d += c.weight / std::pow(c.amplitude / strength, inv_b);
  }
  return d;
}

FailureTime failure_time(const Signal& signal, const MaterialParams& mat, double x_m) {
  mat.validate();
  const double alpha = goodman_factor(x_m, mat);
  const double strength = mat.A * alpha;
  const double neg_inv_b = -1.0 / mat.b;
  RainflowCounter counter([strength, neg_inv_b](double amplitude) {
    return amplitude > 0.0 ? std::pow(amplitude / strength, neg_inv_b) : 0.0;
  });

  TurningPointDetector det(kMinExcursionFraction * mat.sigma_uts);
  std::size_t extrema = 0;
  for (double x : signal.samples) {
    if (auto tp = det.push(x)) {
      counter.push(tp->value);
      ++extrema;
      if (counter.damage() >= 1.0) {
        return FailureTime{signal.time_at(tp->index), false, counter.damage()};
      }
    }
  }
  if (auto tp = det.pending()) {
    counter.push(tp->value);
    ++extrema;
    if (counter.damage() >= 1.0) {
      return FailureTime{signal.time_at(tp->index), false, counter.damage()};
    }
  }
  if (extrema < 2) throw Error(ErrorCode::TooShort, "signal has fewer than two extrema");

  const double d_end = std::max(0.0, counter.damage());
  if (!(d_end > 0.0)) throw Error(ErrorCode::NoDamage, "signal accrues no fatigue damage");
  const double t_end = signal.duration();
  return FailureTime{t_end / d_end, true, d_end};
}

void write_cycles_csv(std::ostream& out, std::span<const CountedCycle> cycles) {
  out << "amplitude,mean,weight\n" << std::setprecision(17);
  for (const auto& c : cycles) out << c.amplitude << ',' << c.mean << ',' << c.weight << '\n';
}

}  // namespace fatigue
