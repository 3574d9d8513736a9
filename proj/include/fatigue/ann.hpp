#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fatigue {

inline constexpr std::size_t kHiddenUnits = 12;

/// input -> hidden (tanh) -> 1 (linear).
struct AnnParams {
  Eigen::MatrixXd w1;      ///< hidden x input
  Eigen::VectorXd b1;      ///< hidden
  Eigen::RowVectorXd w2;   ///< 1 x hidden
  double b2 = 0.0;
  std::string activation = "tanh";

  std::size_t input_dim() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t size() const;

  /// Packs [w1 (column-major), b1, w2, b2] into one vector.
  Eigen::VectorXd flatten() const;
  static AnnParams unflatten(const Eigen::VectorXd& theta, std::size_t input_dim,
                             std::size_t hidden_dim = kHiddenUnits);
};

/// Per-column standardization of inputs and of the scalar target.
struct Normalization {
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  double target_mean = 0.0;
  double target_std = 1.0;

  /// Zero spreads are replaced by 1 so constant columns pass through centred.
  static Normalization fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);

  Eigen::VectorXd normalize_input(std::span<const double> u) const;
  Eigen::MatrixXd normalize_inputs(const Eigen::MatrixXd& rows) const;
  double normalize_target(double y) const { return (y - target_mean) / target_std; }
  double denormalize_target(double z) const { return z * target_std + target_mean; }
};

struct TrainConfig {
  double lambda = 1e-5;
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 500;
  std::uint64_t rng_seed = 0;
  std::size_t patience = 20;        ///< convergence window, epochs
  double tolerance = 1e-6;          ///< relative train-loss change
  std::size_t plateau_epochs = 10;  ///< validation stall before halving the rate
  double min_learning_rate = 1e-7;

  void validate() const;
};

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  ///< in flatten() order
};

struct TrainResult {
  AnnParams params;  ///< best validation loss
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  bool converged = false;
};

/// Xavier-normal weights (variance 2/(fan_in + fan_out)), zero biases.
AnnParams ann_init(std::size_t input_dim, std::uint64_t rng_seed,
                   std::size_t hidden_dim = kHiddenUnits);

/// Network output for one already-normalized input.
double ann_forward(const AnnParams& params, std::span<const double> u);
double ann_forward(const AnnParams& params, const Eigen::VectorXd& u);

/// Mean squared error over the rows of `inputs` plus lambda * ||theta||^2.
LossAndGradient ann_loss_and_gradient(const AnnParams& params, const Eigen::MatrixXd& inputs,
                                      const Eigen::VectorXd& targets, double lambda);

/// Mini-batch Adam on normalized data. Stops once the relative change of the
/// training loss over `patience` epochs drops below `tolerance`, or at
/// `max_epochs`, and returns the parameters with the lowest validation loss.
TrainResult ann_train(const Eigen::MatrixXd& train_inputs, const Eigen::VectorXd& train_targets,
                      const Eigen::MatrixXd& val_inputs, const Eigen::VectorXd& val_targets,
                      const TrainConfig& config);

/// A trained network together with the scaling it was trained under.
struct AnnModel {
  AnnParams params;
  Normalization norm;

  /// eta for raw (unnormalized) features, in seconds.
  double predict(std::span<const double> features) const;
  /// eta in the normalized target scale.
  double predict_normalized(std::span<const double> features) const;
};

nlohmann::json ann_to_json(const AnnModel& model);
AnnModel ann_from_json(const nlohmann::json& j);

}  // namespace fatigue
