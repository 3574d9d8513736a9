#include "fatigue/gpr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fatigue/errors.hpp"

namespace fatigue {

namespace {

constexpr std::array<double, 6> kJitterLadder = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};

Eigen::MatrixXd kernel_matrix(std::span<const double> eta, const GprHyper& h) {
  const auto n = static_cast<Eigen::Index>(eta.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = h.sigma_l * h.sigma_l;
    for (Eigen::Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) =
          rbf_kernel(eta[static_cast<std::size_t>(i)], eta[static_cast<std::size_t>(j)], h);
    }
  }
  return k;
}

struct Factor {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

// Cholesky of kf + sigma_n^2 I, escalating a jitter relative to the diagonal.
Factor factorize(const Eigen::MatrixXd& kf, const GprHyper& h) {
  const double diag = h.sigma_l * h.sigma_l + h.sigma_n * h.sigma_n;
  for (double rel : kJitterLadder) {
    Eigen::MatrixXd k = kf;
    k.diagonal().array() += h.sigma_n * h.sigma_n + rel * diag;
    Factor f{Eigen::LLT<Eigen::MatrixXd>(k), rel * diag};
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      return f;
    }
  }
  throw Error(ErrorCode::SingularKernel,
              "kernel matrix is not positive definite even with jitter 1e-6");
}

double stddev(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

using Vec3 = Eigen::Vector3d;

// Negative log marginal likelihood, +inf where the kernel is unusable.
struct Objective {
  std::span<const double> eta;
  std::span<const double> tau;

  bool eval(const Vec3& x, double& f, Vec3& g) const {
    try {
      const auto r = log_marginal_likelihood_and_gradient(
          GprHyper::from_log({x(0), x(1), x(2)}), eta, tau);
      if (!std::isfinite(r.lml)) return false;
      f = -r.lml;
      g = -Vec3(r.gradient[0], r.gradient[1], r.gradient[2]);
      return g.allFinite();
    } catch (const Error&) {
      return false;
    }
  }
};

// Box-constrained BFGS with a backtracking Armijo search.
Vec3 bfgs(const Objective& obj, Vec3 x, const Vec3& lo, const Vec3& hi, std::size_t max_iter,
          double& f_out) {
  auto clamp = [&](Vec3 v) { return v.cwiseMax(lo).cwiseMin(hi); };
  x = clamp(x);
  double f = 0.0;
  Vec3 g;
  if (!obj.eval(x, f, g)) {
    f_out = std::numeric_limits<double>::infinity();
    return x;
  }
  Eigen::Matrix3d h_inv = Eigen::Matrix3d::Identity();
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Gradient components pushing against an active bound do not count.
    Vec3 pg = g;
    for (int i = 0; i < 3; ++i) {
      if ((x(i) <= lo(i) && g(i) > 0.0) || (x(i) >= hi(i) && g(i) < 0.0)) pg(i) = 0.0;
    }
    if (pg.lpNorm<Eigen::Infinity>() < 1e-7 * (1.0 + std::abs(f))) break;

    Vec3 p = -h_inv * g;
    if (g.dot(p) >= 0.0) {
      h_inv.setIdentity();
      p = -g;
    }
    const double longest = p.lpNorm<Eigen::Infinity>();
    if (longest > 2.0) p *= 2.0 / longest;

    double step = 1.0;
    bool accepted = false;
    Vec3 x_new, g_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls, step *= 0.5) {
      x_new = clamp(x + step * p);
      const Vec3 dx = x_new - x;
      if (dx.squaredNorm() == 0.0) break;
      if (obj.eval(x_new, f_new, g_new) && f_new <= f + 1e-4 * g.dot(dx)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (h_inv.isIdentity()) break;
      h_inv.setIdentity();
      continue;
    }
    const Vec3 s = x_new - x;
    const Vec3 y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::Matrix3d i3 = Eigen::Matrix3d::Identity();
      h_inv = (i3 - rho * s * y.transpose()) * h_inv * (i3 - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    const double df = f - f_new;
    x = x_new;
    f = f_new;
    g = g_new;
    if (df <= 1e-12 * (1.0 + std::abs(f))) break;
  }
  f_out = f;
  return x;
}

}  // namespace

std::array<double, 3> GprHyper::log_values() const {
  return {std::log(sigma_n), std::log(l), std::log(sigma_l)};
}

GprHyper GprHyper::from_log(const std::array<double, 3>& logs) {
  return {std::exp(logs[0]), std::exp(logs[1]), std::exp(logs[2])};
}

void GprHyper::validate() const {
  if (!(sigma_n > 0.0 && l > 0.0 && sigma_l > 0.0) ||
      !std::isfinite(sigma_n * l * sigma_l)) {
    throw Error(ErrorCode::InvalidArgument, "GP hyperparameters must be positive and finite");
  }
}

double rbf_kernel(double eta1, double eta2, const GprHyper& h) {
  const double d = eta1 - eta2;
  return h.sigma_l * h.sigma_l * std::exp(-0.5 * d * d / (h.l * h.l));
}

LmlResult log_marginal_likelihood_and_gradient(const GprHyper& hyper,
                                               std::span<const double> train_eta,
                                               std::span<const double> train_tau) {
  hyper.validate();
  if (train_eta.size() != train_tau.size()) {
    throw Error(ErrorCode::DimensionMismatch, "eta and tau lengths differ");
  }
  if (train_eta.empty()) throw Error(ErrorCode::EmptySet, "no conditioning data");
  const auto n = static_cast<Eigen::Index>(train_eta.size());

  const Eigen::MatrixXd kf = kernel_matrix(train_eta, hyper);
  const Factor fac = factorize(kf, hyper);
  const Eigen::Map<const Eigen::VectorXd> y(train_tau.data(), n);
  const Eigen::VectorXd alpha = fac.llt.solve(y);
  const Eigen::MatrixXd l = fac.llt.matrixL();

  LmlResult r;
  r.jitter = fac.jitter;
  r.lml = -0.5 * y.dot(alpha) - l.diagonal().array().log().sum() -
          0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  // 0.5 tr((alpha alpha^T - K^-1) dK)
  const Eigen::MatrixXd w =
      alpha * alpha.transpose() - fac.llt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = train_eta[static_cast<std::size_t>(i)] - train_eta[static_cast<std::size_t>(j)];
      d2(i, j) = d * d;
    }
  }
  const double sn2 = hyper.sigma_n * hyper.sigma_n;
  r.gradient[0] = 0.5 * w.trace() * 2.0 * sn2;
  r.gradient[1] = 0.5 * (w.array() * kf.array() * d2.array()).sum() / (hyper.l * hyper.l);
  r.gradient[2] = 0.5 * (w.array() * kf.array()).sum() * 2.0;
  return r;
}

GprModel::GprModel(const GprHyper& hyper, std::vector<double> train_eta,
                   std::vector<double> train_tau)
    : hyper_(hyper), eta_(std::move(train_eta)), tau_(std::move(train_tau)) {
  hyper_.validate();
  if (eta_.size() != tau_.size()) {
    throw Error(ErrorCode::DimensionMismatch, "eta and tau lengths differ");
  }
  if (eta_.empty()) throw Error(ErrorCode::EmptySet, "no conditioning data");
  const Factor fac = factorize(kernel_matrix(eta_, hyper_), hyper_);
  chol_ = fac.llt.matrixL();
  jitter_ = fac.jitter;
  alpha_ = fac.llt.solve(
      Eigen::Map<const Eigen::VectorXd>(tau_.data(), static_cast<Eigen::Index>(tau_.size())));
}

Eigen::MatrixXd GprModel::noisy_kernel() const {
  Eigen::MatrixXd k = kernel_matrix(eta_, hyper_);
  k.diagonal().array() += hyper_.sigma_n * hyper_.sigma_n + jitter_;
  return k;
}

GprModel gpr_fit(std::span<const double> train_eta, std::span<const double> train_tau,
                 const GprFitConfig& config) {
  if (train_eta.size() != train_tau.size()) {
    throw Error(ErrorCode::DimensionMismatch, "eta and tau lengths differ");
  }
  if (train_eta.size() < 2) {
    throw Error(ErrorCode::EmptySet, "GP fitting needs at least two conditioning points");
  }
  const double tau_scale = std::max(stddev(train_tau), 1e-12);
  const double eta_scale = std::max(stddev(train_eta), 1e-12);

  const Vec3 scale_log(std::log(tau_scale), std::log(eta_scale), std::log(tau_scale));
  const double start_span = std::log(100.0);
  const double box_span = std::log(1e4);
  const Vec3 lo = scale_log.array() - box_span;
  const Vec3 hi = scale_log.array() + box_span;

  const Objective obj{train_eta, train_tau};
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_real_distribution<double> u(-start_span, start_span);

  double best_f = std::numeric_limits<double>::infinity();
  Vec3 best_x = scale_log;
  const std::size_t restarts = std::max<std::size_t>(1, config.restarts);
  for (std::size_t k = 0; k < restarts; ++k) {
    Vec3 x0;
    for (int i = 0; i < 3; ++i) x0(i) = scale_log(i) + u(rng);
    double f = 0.0;
    const Vec3 x = bfgs(obj, x0, lo, hi, config.max_iterations, f);
    if (f < best_f) {
      best_f = f;
      best_x = x;
    }
  }
  if (!std::isfinite(best_f)) {
    throw Error(ErrorCode::SingularKernel, "no restart produced a factorizable kernel");
  }
  return GprModel(GprHyper::from_log({best_x(0), best_x(1), best_x(2)}),
                  std::vector<double>(train_eta.begin(), train_eta.end()),
                  std::vector<double>(train_tau.begin(), train_tau.end()));
}

GpPrediction gpr_predict(const GprModel& model, double eta_star) {
  if (!model.fitted()) throw Error(ErrorCode::InvalidArgument, "GP model is not fitted");
  const auto& eta = model.train_eta();
  const auto n = static_cast<Eigen::Index>(eta.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i) = rbf_kernel(eta_star, eta[static_cast<std::size_t>(i)], model.hyper());
  }
  GpPrediction p;
  p.mu = k.dot(model.alpha());
  const Eigen::VectorXd v = model.chol().triangularView<Eigen::Lower>().solve(k);
  const double prior = model.hyper().sigma_l * model.hyper().sigma_l;
  p.var = std::clamp(prior - v.squaredNorm(), 0.0, prior);
  return p;
}

nlohmann::json gpr_to_json(const GprModel& model) {
  const auto logs = model.hyper().log_values();
  return {
      {"schema", "gpr/1"},
      {"log_hypers", {{"sigma_n", logs[0]}, {"l", logs[1]}, {"sigma_l", logs[2]}}},
      {"train_eta", model.train_eta()},
      {"train_tau", model.train_tau()},
  };
}

GprModel gpr_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != "gpr/1") {
      throw Error(ErrorCode::Parse, "unsupported gpr schema");
    }
    const auto& lh = j.at("log_hypers");
    const GprHyper h = GprHyper::from_log(
        {lh.at("sigma_n").get<double>(), lh.at("l").get<double>(), lh.at("sigma_l").get<double>()});
    return GprModel(h, j.at("train_eta").get<std::vector<double>>(),
                    j.at("train_tau").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("malformed gpr model: ") + e.what());
  }
}

}  // namespace fatigue
