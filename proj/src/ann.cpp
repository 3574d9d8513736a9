#include "fatigue/ann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "fatigue/errors.hpp"

namespace fatigue {

namespace {

void check_finite(const AnnParams& p) {
  if (!p.flatten().allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite parameters");
}

}  // namespace

std::size_t AnnParams::size() const {
  return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + 1);
}

Eigen::VectorXd AnnParams::flatten() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  theta.segment(k, w1.size()) = Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size());
  k += w1.size();
  theta.segment(k, b1.size()) = b1;
  k += b1.size();
  theta.segment(k, w2.size()) = w2.transpose();
  k += w2.size();
  theta(k) = b2;
  return theta;
}

AnnParams AnnParams::unflatten(const Eigen::VectorXd& theta, std::size_t input_dim,
                               std::size_t hidden_dim) {
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto hid = static_cast<Eigen::Index>(hidden_dim);
  if (theta.size() != hid * in + 2 * hid + 1) {
    throw Error(ErrorCode::DimensionMismatch, "parameter vector has the wrong length");
  }
  AnnParams p;
  Eigen::Index k = 0;
  p.w1 = Eigen::Map<const Eigen::MatrixXd>(theta.data(), hid, in);
  k += hid * in;
  p.b1 = theta.segment(k, hid);
  k += hid;
  p.w2 = theta.segment(k, hid).transpose();
  k += hid;
  p.b2 = theta(k);
  return p;
}

// -- normalization -----------------------------------------------------------

Normalization Normalization::fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
  if (inputs.rows() == 0 || inputs.rows() != targets.size()) {
    throw Error(ErrorCode::EmptySet, "normalization needs matching, non-empty inputs and targets");
  }
  Normalization n;
  const double rows = static_cast<double>(inputs.rows());
  for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
    const double mean = inputs.col(c).mean();
    const double var = (inputs.col(c).array() - mean).square().sum() / rows;
    const double sd = std::sqrt(var);
    n.feature_means.push_back(mean);
    n.feature_stds.push_back(sd > 0.0 ? sd : 1.0);
  }
  n.target_mean = targets.mean();
  const double tsd = std::sqrt((targets.array() - n.target_mean).square().sum() / rows);
  n.target_std = tsd > 0.0 ? tsd : 1.0;
  return n;
}

Eigen::VectorXd Normalization::normalize_input(std::span<const double> u) const {
  if (u.size() != feature_means.size()) {
    throw Error(ErrorCode::DimensionMismatch, "feature vector has " + std::to_string(u.size()) +
                                                  " entries, expected " +
                                                  std::to_string(feature_means.size()));
  }
  Eigen::VectorXd z(static_cast<Eigen::Index>(u.size()));
  for (std::size_t i = 0; i < u.size(); ++i) {
    z(static_cast<Eigen::Index>(i)) = (u[i] - feature_means[i]) / feature_stds[i];
  }
  return z;
}

Eigen::MatrixXd Normalization::normalize_inputs(const Eigen::MatrixXd& rows) const {
  if (static_cast<std::size_t>(rows.cols()) != feature_means.size()) {
    throw Error(ErrorCode::DimensionMismatch, "input matrix has the wrong column count");
  }
  Eigen::MatrixXd z = rows;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    z.col(c) = (z.col(c).array() - feature_means[i]) / feature_stds[i];
  }
  return z;
}

// -- network -------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
  if (max_epochs < 1) throw Error(ErrorCode::InvalidArgument, "max_epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
}

AnnParams ann_init(std::size_t input_dim, std::uint64_t rng_seed, std::size_t hidden_dim) {
  if (input_dim != 5 && input_dim != 9) {
    throw Error(ErrorCode::InvalidArgument, "input dimension must be 5 or 9");
  }
  if (hidden_dim < 1) throw Error(ErrorCode::InvalidArgument, "hidden layer cannot be empty");
  std::mt19937_64 rng(rng_seed);
  const auto in = static_cast<Eigen::Index>(input_dim);
  const auto hid = static_cast<Eigen::Index>(hidden_dim);

  std::normal_distribution<double> g1(0.0, std::sqrt(2.0 / static_cast<double>(in + hid)));
  std::normal_distribution<double> g2(0.0, std::sqrt(2.0 / static_cast<double>(hid + 1)));
  AnnParams p;
  p.w1.resize(hid, in);
  for (Eigen::Index c = 0; c < in; ++c) {
    for (Eigen::Index r = 0; r < hid; ++r) p.w1(r, c) = g1(rng);
  }
  p.b1 = Eigen::VectorXd::Zero(hid);
  p.w2.resize(hid);
  for (Eigen::Index r = 0; r < hid; ++r) p.w2(r) = g2(rng);
  p.b2 = 0.0;
  return p;
}

double ann_forward(const AnnParams& params, const Eigen::VectorXd& u) {
  if (static_cast<std::size_t>(u.size()) != params.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "input has " + std::to_string(u.size()) +
                                                  " entries, network expects " +
                                                  std::to_string(params.input_dim()));
  }
  const Eigen::VectorXd h = (params.w1 * u + params.b1).array().tanh().matrix();
  return params.w2.dot(h) + params.b2;
}

double ann_forward(const AnnParams& params, std::span<const double> u) {
  return ann_forward(params,
                     Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()))
                         .eval());
}

LossAndGradient ann_loss_and_gradient(const AnnParams& params, const Eigen::MatrixXd& inputs,
                                      const Eigen::VectorXd& targets, double lambda) {
  if (inputs.rows() == 0) throw Error(ErrorCode::EmptyBatch, "empty batch");
  if (inputs.rows() != targets.size() ||
      static_cast<std::size_t>(inputs.cols()) != params.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "batch shape does not match the network");
  }
  const double n = static_cast<double>(inputs.rows());

  // Columns are examples.
  const Eigen::MatrixXd z = (params.w1 * inputs.transpose()).colwise() + params.b1;
  const Eigen::MatrixXd h = z.array().tanh().matrix();
  const Eigen::RowVectorXd out = (params.w2 * h).array() + params.b2;
  const Eigen::RowVectorXd resid = out - targets.transpose();

  const Eigen::VectorXd theta = params.flatten();
  LossAndGradient lg;
  lg.loss = resid.squaredNorm() / n + lambda * theta.squaredNorm();

  const Eigen::RowVectorXd d_out = (2.0 / n) * resid;
  const Eigen::RowVectorXd g_w2 = d_out * h.transpose();
  const double g_b2 = d_out.sum();
  const Eigen::MatrixXd d_z =
      (params.w2.transpose() * d_out).array() * (1.0 - h.array().square());
  const Eigen::MatrixXd g_w1 = d_z * inputs;
  const Eigen::VectorXd g_b1 = d_z.rowwise().sum();

  AnnParams g;
  g.w1 = g_w1;
  g.b1 = g_b1;
  g.w2 = g_w2;
  g.b2 = g_b2;
  lg.gradient = g.flatten() + 2.0 * lambda * theta;
  return lg;
}

TrainResult ann_train(const Eigen::MatrixXd& train_inputs, const Eigen::VectorXd& train_targets,
                      const Eigen::MatrixXd& val_inputs, const Eigen::VectorXd& val_targets,
                      const TrainConfig& config) {
  config.validate();
  if (train_inputs.rows() == 0 || val_inputs.rows() == 0) {
    throw Error(ErrorCode::EmptySet, "training and validation sets must be non-empty");
  }
  if (train_inputs.rows() != train_targets.size() || val_inputs.rows() != val_targets.size() ||
      train_inputs.cols() != val_inputs.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "training data shapes disagree");
  }

  const auto in = static_cast<std::size_t>(train_inputs.cols());
  std::mt19937_64 rng(config.rng_seed);
  AnnParams params = ann_init(in, rng());
  Eigen::VectorXd theta = params.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double lr = config.learning_rate;
  std::uint64_t step = 0;

  const auto rows = static_cast<std::size_t>(train_inputs.rows());
  std::vector<Eigen::Index> order(rows);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  auto data_loss = [&](const AnnParams& p, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::MatrixXd h = ((p.w1 * x.transpose()).colwise() + p.b1).array().tanh().matrix();
    const Eigen::RowVectorXd out = (p.w2 * h).array() + p.b2;
    return (out - y.transpose()).squaredNorm() / static_cast<double>(x.rows());
  };

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  result.params = params;
  std::size_t since_improvement = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = rows; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    for (std::size_t start = 0; start < rows; start += config.batch_size) {
      const std::size_t stop = std::min(rows, start + config.batch_size);
      std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Eigen::MatrixXd xb = train_inputs(idx, Eigen::all);
      const Eigen::VectorXd yb = train_targets(idx);
      const auto lg = ann_loss_and_gradient(AnnParams::unflatten(theta, in, kHiddenUnits), xb, yb,
                                            config.lambda);
      ++step;
      m = beta1 * m + (1.0 - beta1) * lg.gradient;
      v = beta2 * v + (1.0 - beta2) * lg.gradient.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    }

    params = AnnParams::unflatten(theta, in, kHiddenUnits);
    const double train = data_loss(params, train_inputs, train_targets) +
                         config.lambda * theta.squaredNorm();
    const double val = data_loss(params, val_inputs, val_targets);
    if (!std::isfinite(train)) throw Error(ErrorCode::InvalidArgument, "training diverged");
    result.train_loss.push_back(train);
    result.val_loss.push_back(val);

    if (val < best_val) {
      best_val = val;
      result.params = params;
      result.best_epoch = epoch;
      since_improvement = 0;
    } else if (++since_improvement >= config.plateau_epochs) {
      lr = std::max(config.min_learning_rate, 0.5 * lr);
      since_improvement = 0;
    }

    if (epoch >= config.patience) {
      const double before = result.train_loss[epoch - config.patience];
      if (std::abs(before - train) <= config.tolerance * std::max(before, 1e-300)) {
        result.converged = true;
        break;
      }
    }
  }
  check_finite(result.params);
  return result;
}

// -- model -----------------------------------------------------------------------

double AnnModel::predict_normalized(std::span<const double> features) const {
  return ann_forward(params, norm.normalize_input(features));
}

double AnnModel::predict(std::span<const double> features) const {
  return norm.denormalize_target(predict_normalized(features));
}

nlohmann::json ann_to_json(const AnnModel& model) {
  const auto& p = model.params;
  nlohmann::json w1 = nlohmann::json::array();
  for (Eigen::Index r = 0; r < p.w1.rows(); ++r) {
    std::vector<double> row(p.w1.cols());
    for (Eigen::Index c = 0; c < p.w1.cols(); ++c) row[static_cast<std::size_t>(c)] = p.w1(r, c);
    w1.push_back(row);
  }
  std::vector<double> w2(p.w2.data(), p.w2.data() + p.w2.size());
  std::vector<double> b1(p.b1.data(), p.b1.data() + p.b1.size());
  return {
      {"schema", "ann/1"},
      {"dims", {p.input_dim(), p.hidden_dim(), 1}},
      {"activation", p.activation},
      {"weights", {w1, nlohmann::json::array({w2})}},
      {"biases", {b1, {p.b2}}},
      {"normalization",
       {{"feature_means", model.norm.feature_means},
        {"feature_stds", model.norm.feature_stds},
        {"target_mean", model.norm.target_mean},
        {"target_std", model.norm.target_std}}},
  };
}

AnnModel ann_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "ann/1") {
      throw Error(ErrorCode::Parse, "unsupported ann schema");
    }
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3 || dims[2] != 1) throw Error(ErrorCode::Parse, "bad ann dims");
    const auto in = static_cast<Eigen::Index>(dims[0]);
    const auto hid = static_cast<Eigen::Index>(dims[1]);
    AnnModel m;
    m.params.activation = j.at("activation").get<std::string>();
    if (m.params.activation != "tanh") throw Error(ErrorCode::Parse, "unsupported activation");
    const auto w1 = j.at("weights").at(0).get<std::vector<std::vector<double>>>();
    const auto w2 = j.at("weights").at(1).at(0).get<std::vector<double>>();
    const auto b1 = j.at("biases").at(0).get<std::vector<double>>();
    const auto b2 = j.at("biases").at(1).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w1.size()) != hid ||
        static_cast<Eigen::Index>(w2.size()) != hid ||
        static_cast<Eigen::Index>(b1.size()) != hid || b2.size() != 1) {
      throw Error(ErrorCode::Parse, "ann weight shapes do not match dims");
    }
    m.params.w1.resize(hid, in);
    for (Eigen::Index r = 0; r < hid; ++r) {
      const auto& row = w1[static_cast<std::size_t>(r)];
      if (static_cast<Eigen::Index>(row.size()) != in) {
        throw Error(ErrorCode::Parse, "ann weight row has the wrong length");
      }
      for (Eigen::Index c = 0; c < in; ++c) m.params.w1(r, c) = row[static_cast<std::size_t>(c)];
    }
    m.params.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), hid);
    m.params.w2 = Eigen::Map<const Eigen::RowVectorXd>(w2.data(), hid);
    m.params.b2 = b2[0];
    const auto& n = j.at("normalization");
    m.norm.feature_means = n.at("feature_means").get<std::vector<double>>();
    m.norm.feature_stds = n.at("feature_stds").get<std::vector<double>>();
    m.norm.target_mean = n.at("target_mean").get<double>();
    m.norm.target_std = n.at("target_std").get<double>();
    if (static_cast<Eigen::Index>(m.norm.feature_means.size()) != in ||
        m.norm.feature_stds.size() != m.norm.feature_means.size()) {
      throw Error(ErrorCode::Parse, "normalization length does not match dims");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed ann model: ") + e.what());
  }
}

}  // namespace fatigue
