#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fatigue/errors.hpp"
#include "fatigue/gpr.hpp"

using namespace fatigue;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

// Direct evaluation with a dense inverse and determinant.
double reference_lml(const GprHyper& h, const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = x[i] - x[j];
      k(i, j) = h.sigma_l * h.sigma_l * std::exp(-d * d / (2.0 * h.l * h.l)) +
                (i == j ? h.sigma_n * h.sigma_n : 0.0);
    }
  }
  const Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
  return -0.5 * yy.dot(lu.solve(yy)) - 0.5 * std::log(lu.determinant()) -
         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

struct Data {
  std::vector<double> x, y;
};

Data sample_gp(std::size_t n, double lo, double hi, const GprHyper& h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::normal_distribution<double> g(0.0, 1.0);
  Data d;
  for (std::size_t i = 0; i < n; ++i) d.x.push_back(u(rng));
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd k(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) k(i, j) = rbf_kernel(d.x[i], d.x[j], h);
  }
  k.diagonal().array() += 1e-9 + h.sigma_n * h.sigma_n;
  const Eigen::MatrixXd l = k.llt().matrixL();
  const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(m, [&] { return g(rng); });
  const Eigen::VectorXd f = l * z;
  d.y.assign(f.data(), f.data() + m);
  return d;
}

}  // namespace

TEST_CASE("rbf kernel values") {
  const GprHyper h{0.1, 1.0, 1.0};
  CHECK(rbf_kernel(3.0, 3.0, h) == 1.0);
  CHECK(rbf_kernel(0.0, 1.0, h) == doctest::Approx(0.606531).epsilon(1e-6));
  CHECK(rbf_kernel(2.0, -1.0, h) == rbf_kernel(-1.0, 2.0, h));
  CHECK(rbf_kernel(0.0, 2.0, GprHyper{0.1, 2.0, 3.0}) == doctest::Approx(9.0 * std::exp(-0.5)));
}

TEST_CASE("log marginal likelihood matches dense evaluation") {
  const GprHyper h{0.3, 1.7, 2.2};
  const auto d = sample_gp(25, -5.0, 5.0, h, 1);
  const auto r = log_marginal_likelihood_and_gradient(h, d.x, d.y);
  CHECK(r.lml == doctest::Approx(reference_lml(h, d.x, d.y)).epsilon(1e-10));
  CHECK(r.jitter == 0.0);
}

TEST_CASE("single point closed form") {
  const GprHyper h{0.5, 1.0, 2.0};
  const std::vector<double> x = {0.4}, y = {1.5};
  const double s2 = 4.0 + 0.25;
  const double want = -0.5 * 1.5 * 1.5 / s2 - 0.5 * std::log(s2) - 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(log_marginal_likelihood_and_gradient(h, x, y).lml == doctest::Approx(want).epsilon(1e-13));
}

TEST_CASE("lml gradient matches central differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const GprHyper truth{0.2, 1.0, 1.5};
    const auto d = sample_gp(15, -4.0, 4.0, truth, 100 + trial);
    const std::array<double, 3> logs = {std::log(0.3) + u(rng), u(rng), std::log(1.5) + u(rng)};
    const auto r = log_marginal_likelihood_and_gradient(GprHyper::from_log(logs), d.x, d.y);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      auto lp = logs, lm = logs;
      lp[k] += h;
      lm[k] -= h;
      const double fd =
          (log_marginal_likelihood_and_gradient(GprHyper::from_log(lp), d.x, d.y).lml -
           log_marginal_likelihood_and_gradient(GprHyper::from_log(lm), d.x, d.y).lml) /
          (2.0 * h);
      CHECK(r.gradient[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("lml input errors") {
  const std::vector<double> a = {1.0, 2.0}, b = {1.0};
  CHECK(code_of([&] { log_marginal_likelihood_and_gradient({}, a, b); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { log_marginal_likelihood_and_gradient({}, {}, {}); }) == ErrorCode::EmptySet);
  CHECK(code_of([&] { gpr_fit(b, b); }) == ErrorCode::EmptySet);
  CHECK(code_of([] { GprHyper{0.0, 1.0, 1.0}.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("fitted hyperparameters recover the generating ones") {
  const GprHyper truth{0.1, 1.0, 2.0};
  const auto d = sample_gp(200, -50.0, 50.0, truth, 3);
  const auto m = gpr_fit(d.x, d.y, {8, 5, 200});
  CHECK(m.hyper().l == doctest::Approx(1.0).epsilon(0.2));
  CHECK(m.hyper().sigma_l == doctest::Approx(2.0).epsilon(0.2));
  CHECK(m.hyper().sigma_n == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("fit is equivariant to rescaling of the data") {
  const auto d = sample_gp(60, -10.0, 10.0, GprHyper{0.2, 1.5, 1.0}, 4);
  const auto base = gpr_fit(d.x, d.y, {8, 1, 200});
  Data s = d;
  for (double& v : s.x) v *= 10.0;
  for (double& v : s.y) v *= 100.0;
  const auto scaled = gpr_fit(s.x, s.y, {8, 1, 200});
  CHECK(scaled.hyper().l == doctest::Approx(10.0 * base.hyper().l).epsilon(0.01));
  CHECK(scaled.hyper().sigma_l == doctest::Approx(100.0 * base.hyper().sigma_l).epsilon(0.01));
  CHECK(scaled.hyper().sigma_n == doctest::Approx(100.0 * base.hyper().sigma_n).epsilon(0.01));
}

TEST_CASE("duplicated inputs with different targets need observation noise") {
  const std::vector<double> x = {0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0};
  const std::vector<double> y = {0.0, 0.5, 1.0, 1.4, 0.2, -0.3, -1.0, -0.6};
  const auto m = gpr_fit(x, y);
  CHECK(m.hyper().sigma_n > 0.05);
  const auto again = gpr_fit(x, y);
  CHECK(again.hyper().log_values() == m.hyper().log_values());
}

TEST_CASE("prediction behaviour") {
  const GprHyper h{1e-3, 1.0, 2.0};
  const std::vector<double> x = {-2.0, -1.0, 0.0, 1.5, 3.0};
  const std::vector<double> y = {1.0, -0.5, 2.0, 0.3, -1.2};
  const GprModel m(h, x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = gpr_predict(m, x[i]);
    CHECK(p.mu == doctest::Approx(y[i]).epsilon(1e-4).scale(1.0));
    CHECK(p.var < 1e-5);
  }
  // Far away the prior returns.
  const auto far = gpr_predict(m, 500.0);
  CHECK(far.mu == doctest::Approx(0.0).scale(1.0));
  CHECK(far.var == doctest::Approx(4.0).epsilon(1e-12));
  for (double e = -10.0; e <= 10.0; e += 0.1) CHECK(gpr_predict(m, e).var <= 4.0 + 1e-8);
}

TEST_CASE("single training pair closed form") {
  const GprHyper h{0.5, 2.0, 1.5};
  const GprModel m(h, {1.0}, {3.0});
  const double k = rbf_kernel(1.0, 2.0, h);
  const double s2 = 2.25 + 0.25;
  const auto p = gpr_predict(m, 2.0);
  CHECK(p.mu == doctest::Approx(k * 3.0 / s2).epsilon(1e-13));
  CHECK(p.var == doctest::Approx(2.25 - k * k / s2).epsilon(1e-13));
}

TEST_CASE("cached factor reconstructs the kernel") {
  const auto d = sample_gp(40, -5.0, 5.0, GprHyper{0.1, 1.0, 1.0}, 6);
  const GprModel m(GprHyper{0.1, 1.0, 1.0}, d.x, d.y);
  const Eigen::MatrixXd k = m.noisy_kernel();
  CHECK((k - k.transpose()).norm() == 0.0);
  CHECK((m.chol() * m.chol().transpose() - k).norm() < 1e-10 * k.norm());
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(d.y.data(), 40);
  CHECK((k * m.alpha() - y).norm() < 1e-8 * y.norm());
}

TEST_CASE("variance is smaller where data are dense") {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(0.05 * i);
    y.push_back(std::sin(0.05 * i));
  }
  x.push_back(5.0);
  y.push_back(std::sin(5.0));
  const GprHyper h{0.1, 1.0, 1.0};
  const GprModel m(h, x, y);
  CHECK(gpr_predict(m, 0.5).var < gpr_predict(m, 5.5).var);

  // One more observation never increases the variance anywhere.
  auto x2 = x, y2 = y;
  x2.push_back(3.0);
  y2.push_back(std::sin(3.0));
  const GprModel m2(h, x2, y2);
  for (double e = -2.0; e <= 8.0; e += 0.25) {
    CHECK(gpr_predict(m2, e).var <= gpr_predict(m, e).var + 1e-12);
  }
}

TEST_CASE("json round trip") {
  const auto d = sample_gp(12, -3.0, 3.0, GprHyper{0.2, 1.0, 1.0}, 7);
  const auto m = gpr_fit(d.x, d.y);
  const auto j = gpr_to_json(m);
  CHECK(j["schema"] == "gpr/1");
  const auto back = gpr_from_json(nlohmann::json::parse(j.dump()));
  for (double e : {-2.0, 0.1, 4.0}) {
    CHECK(gpr_predict(back, e).mu == gpr_predict(m, e).mu);
    CHECK(gpr_predict(back, e).var == gpr_predict(m, e).var);
  }
}
