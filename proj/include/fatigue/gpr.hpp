#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fatigue {

/// RBF-kernel hyperparameters. Optimization works on their logarithms, in
/// the order {sigma_n, l, sigma_l}.
struct GprHyper {
  double sigma_n = 1.0;  ///< observation noise std
  double l = 1.0;        ///< length scale
  double sigma_l = 1.0;  ///< signal std

  std::array<double, 3> log_values() const;
  static GprHyper from_log(const std::array<double, 3>& logs);
  void validate() const;
};

/// sigma_l^2 * exp(-(a - b)^2 / (2 l^2)).
double rbf_kernel(double eta1, double eta2, const GprHyper& hyper);

struct LmlResult {
  double lml = 0.0;
  std::array<double, 3> gradient{};  ///< d lml / d log(sigma_n, l, sigma_l)
  double jitter = 0.0;               ///< diagonal jitter that was needed
};

/// Log marginal likelihood of a zero-mean GP and its gradient with respect to
/// the log-hyperparameters. Throws SingularKernel if the kernel matrix cannot
/// be factorized even with the largest jitter.
LmlResult log_marginal_likelihood_and_gradient(const GprHyper& hyper,
                                               std::span<const double> train_eta,
                                               std::span<const double> train_tau);

struct GprFitConfig {
  std::size_t restarts = 8;
  std::uint64_t rng_seed = 0;
  std::size_t max_iterations = 200;
};

/// A conditioned GP: hyperparameters, training data, and the cached Cholesky
/// factor of K + sigma_n^2 I together with alpha = (K + sigma_n^2 I)^-1 tau.
class GprModel {
 public:
  GprModel() = default;
  GprModel(const GprHyper& hyper, std::vector<double> train_eta, std::vector<double> train_tau);

  const GprHyper& hyper() const { return hyper_; }
  const std::vector<double>& train_eta() const { return eta_; }
  const std::vector<double>& train_tau() const { return tau_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double jitter() const { return jitter_; }
  /// K + (sigma_n^2 + jitter) I, the matrix that was factorized.
  Eigen::MatrixXd noisy_kernel() const;
  bool fitted() const { return !eta_.empty(); }

 private:
  GprHyper hyper_;
  std::vector<double> eta_;
  std::vector<double> tau_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

/// Multi-start BFGS maximization of the log marginal likelihood in
/// log-hyperparameter space. Needs at least two training points.
GprModel gpr_fit(std::span<const double> train_eta, std::span<const double> train_tau,
                 const GprFitConfig& config = {});

struct GpPrediction {
  double mu = 0.0;
  double var = 0.0;  ///< latent variance, excludes sigma_n^2
};

GpPrediction gpr_predict(const GprModel& model, double eta_star);

nlohmann::json gpr_to_json(const GprModel& model);
GprModel gpr_from_json(const nlohmann::json& j);

}  // namespace fatigue
