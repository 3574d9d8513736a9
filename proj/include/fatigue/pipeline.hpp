#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fatigue/ann.hpp"
#include "fatigue/features.hpp"
#include "fatigue/gpr.hpp"
#include "fatigue/material.hpp"
#include "fatigue/posterior.hpp"
#include "fatigue/signal_gen.hpp"

namespace fatigue {

/// splitmix64 of (master, index): independent, order-free per-sample seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct GenerationConfig {
  SamplingRanges ranges;
  double f_s = 1.0;          ///< feature/prediction rate, Hz
  double noise_frac = 0.025;  ///< feature noise as a fraction of each feature's range
  double rho = kDefaultRho;
  bool extended = false;      ///< append spectral moments to the features
  /// Draws whose failure time falls outside this window are redrawn.
  Range life_window{30.0, 300.0};
  double probe_duration = 2.0;  ///< s of signal used to estimate the life before full synthesis
  std::size_t max_redraws = 5000;
  std::size_t max_no_damage = 10;

  void validate() const;
};

struct DatasetSample {
  std::size_t id = 0;
  std::uint64_t seed = 0;  ///< recipe seed of the accepted draw
  SignalRecipe recipe;
  MaterialParams material;
  double x_m_true = 0.0;
  double tau_gt = 0.0;
  std::string signal_path;  ///< set for imported signals
  /// Features at t = k / f_s before failure, noise-free and with noise.
  std::vector<FeatureVector> clean;
  std::vector<FeatureVector> trajectory;
};

struct Dataset {
  GenerationConfig config;
  std::uint64_t master_seed = 0;
  FeatureRanges noise_widths;
  std::vector<DatasetSample> samples;
};

/// Draws, synthesizes and labels `n` samples, then records their feature
/// trajectories. Deterministic in `master_seed`.
Dataset generate_dataset(std::size_t n, const GenerationConfig& config, std::uint64_t master_seed);

/// Re-synthesizes the stress history of a generated sample.
Signal sample_signal(const DatasetSample& sample);

/// Noise-free feature vectors at every instant k / f_s <= stop_time.
std::vector<FeatureVector> feature_trajectory(const Signal& signal, const MaterialParams& mat,
                                              double rho, double f_s, bool extended,
                                              double stop_time);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> cv;
  std::vector<std::size_t> test;
};

/// Shuffled partition of [0, n). The cv and test sizes are rounded and the
/// remainder goes to train.
Split split_dataset(std::size_t n, const std::array<double, 3>& ratios, std::uint64_t rng_seed);

struct HybridConfig {
  TrainConfig ann;
  GprFitConfig gpr;
  std::size_t instants_per_sample = 30;  ///< ANN training rows per training sample
  double train_instant_fraction = 1.0;   ///< where along the trajectory the GP input is taken
  double validation_fraction = 0.15;     ///< of the train split, for early stopping
};

struct HybridModel {
  AnnModel ann;
  GprModel gpr;
  double rho = kDefaultRho;
  double f_s = 1.0;
  bool extended = false;
  Split split;
  std::vector<double> ann_train_loss;
  std::vector<double> ann_val_loss;

  /// Failure-time prior for one feature vector: GP mean and predictive
  /// standard deviation (latent plus noise), both in seconds.
  std::pair<double, double> prior(std::span<const double> features) const;
  /// The ANN embedding in seconds.
  double eta(std::span<const double> features) const;
};

HybridModel train_hybrid(const Dataset& data, const Split& split, const HybridConfig& config);

struct StreamConfig {
  double alpha = 0.95;
  double f_s = 1.0;
  double stop_time = std::numeric_limits<double>::infinity();
  double noise_frac = 0.0;
  FeatureRanges noise_widths{};
  std::uint64_t noise_seed = 0;
};

/// Causal replay: one prediction per instant k / f_s, using only samples up
/// to that instant. Instants before the first extremum emit nothing. Once the
/// prior has no mass left above t the prediction is flagged overdue.
std::vector<Prediction> stream_predict(const HybridModel& model, const Signal& signal,
                                       const MaterialParams& mat, const StreamConfig& config);

struct EvalConfig {
  double alpha = 0.95;
  double beta = 0.6;
  double r = 0.75;
  double f_s = 1.0;

  void validate() const;
};

enum class Outcome { Accurate, Conservative, Nonconservative };
const char* to_string(Outcome o);

/// Accurate when tau_gt lies in the interval for at least a fraction r of the
/// instants in [(1 - r) beta tau_gt, beta tau_gt]. Otherwise conservative if
/// tau_gt > tau_plus at the last instant of the window and nonconservative if
/// tau_gt < tau_minus; when the last instant contains tau_gt the more
/// frequent violation in the window decides, ties going to conservative.
Outcome evaluate_success(std::span<const Prediction> predictions, double tau_gt,
                         const EvalConfig& config);

struct EvalReport {
  std::size_t total = 0;
  std::size_t accurate = 0;
  std::size_t conservative = 0;
  std::size_t nonconservative = 0;

  double accuracy() const;
  double conservative_frac() const;     ///< of the inaccurate cases
  double nonconservative_frac() const;  ///< of the inaccurate cases
};

EvalReport aggregate_metrics(std::span<const Outcome> results);

/// The prediction emitted at the last instant not after `t`, if any.
std::optional<Prediction> prediction_at(std::span<const Prediction> predictions, double t);

struct SampleEvaluation {
  std::size_t id = 0;
  double tau_gt = 0.0;
  Outcome outcome = Outcome::Accurate;
  bool contained_at_95 = false;
  std::vector<Prediction> predictions;
};

struct DatasetEvaluation {
  EvalReport report;
  double calibration = 0.0;  ///< fraction containing tau_gt at 0.95 tau_gt
  std::vector<SampleEvaluation> samples;
};

/// Streams every listed sample up to its failure time and scores it.
DatasetEvaluation evaluate_dataset(const HybridModel& model, const Dataset& data,
                                   std::span<const std::size_t> ids, const EvalConfig& config,
                                   bool keep_predictions = false);

/// End-of-life extrema (subsampled to at most `max_extrema`) for rho tuning.
std::vector<RhoCase> rho_cases(const Dataset& data, std::span<const std::size_t> ids,
                               std::size_t max_extrema = 4096);

// Serialization

nlohmann::json generation_config_to_json(const GenerationConfig& config);
GenerationConfig generation_config_from_json(const nlohmann::json& j);

nlohmann::json hybrid_to_json(const HybridModel& model);
HybridModel hybrid_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const DatasetEvaluation& eval, const EvalConfig& config);

/// Writes manifest.json and one trajectory CSV per sample under `dir`.
void write_dataset(const Dataset& data, const std::string& dir, bool write_signals = false);
Dataset read_dataset(const std::string& dir);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace fatigue
