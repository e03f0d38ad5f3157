#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "structvi/errors.hpp"
#include "structvi/models.hpp"

using namespace structvi;
using structvi::testing::Random;
using structvi::testing::fd_derivative;
using structvi::testing::fd_gradient;
using structvi::testing::random_models;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> values) {
  VectorXd v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("log_joint worked examples") {
  CHECK(log_joint(WienerGaussian(vec({0}), 1, 1, 1), vec({0})) == doctest::Approx(-kLog2Pi));
  CHECK(log_joint(WienerGaussian(vec({2}), 1, 1, 1), vec({1})) == doctest::Approx(-kLog2Pi - 1));
  const OuPoisson p(vec({0}), 0.5, 1.0);
  CHECK(log_joint(p, vec({0})) == doctest::Approx(p.log_init(0) - 1));
  CHECK_THROWS_AS(log_joint(p, vec({0, 0})), ArgumentError);

  Random rng(1);
  for (const auto& m : random_models(rng, 6)) {
    const VectorXd z = rng.normal_vector(6);
    CHECK(log_joint(*m, z) == log_joint(*m, z));
  }
}

TEST_CASE("gamma worked examples") {
  CHECK(gamma(WienerGaussian(vec({0, 2}), 1, 1, 1), vec({0, 0})).isApprox(vec({0, 2})));
  CHECK(gamma(WienerGaussian(vec({0}), 1, 1, 1), vec({0}))[0] == 0.0);
  CHECK_THROWS_AS(gamma(WienerGaussian(vec({0}), 1, 1, 1), vec({0, 1})), ArgumentError);
}

TEST_CASE("built-in model callbacks") {
  const WienerGaussian w(vec({1.5, -0.5}), 1.0, 0.5, 2.0);
  CHECK(w.dlog_lik(0, 0.5) == doctest::Approx(2.0 * (1.5 - 0.5)));
  CHECK(w.dlog_trans_curr(1, 0.7, 0.2) == doctest::Approx(-(0.7 - 0.2) / 0.25));

  const OuPoisson p(vec({3, 0}), 0.8, 0.5);
  CHECK(p.dlog_lik(0, 0.0) == doctest::Approx(2.0));
  CHECK(p.dlog_trans_prev(1, 0.3, -0.4) == doctest::Approx(0.8 * (0.3 - 0.8 * -0.4) / 0.25));

  const OuBernoulli b(vec({1, 0}), 0.5, 1.0);
  CHECK(b.dlog_lik(0, 0.0) == doctest::Approx(0.5));
  CHECK(b.log_lik(0, 0.0) == doctest::Approx(std::log(0.5)));
  CHECK(b.log_lik(1, 0.0) == doctest::Approx(std::log(0.5)));
}

TEST_CASE("derivative callbacks agree with finite differences") {
  Random rng(2);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    for (const auto& m : random_models(rng, 4)) {
      INFO(m->name());
      const double z = rng.uniform(-2.0, 2.0), zp = rng.uniform(-2.0, 2.0);
      for (Eigen::Index t = 0; t < 4; ++t) {
        CHECK(m->dlog_lik(t, z) ==
              doctest::Approx(fd_derivative([&](double u) { return m->log_lik(t, u); }, z, h)).epsilon(1e-6));
      }
      CHECK(m->dlog_trans_curr(1, z, zp) ==
            doctest::Approx(fd_derivative([&](double u) { return m->log_trans(1, u, zp); }, z, h))
                .epsilon(1e-6));
      CHECK(m->dlog_trans_prev(1, z, zp) ==
            doctest::Approx(fd_derivative([&](double u) { return m->log_trans(1, z, u); }, zp, h))
                .epsilon(1e-6));
      CHECK(m->dlog_init(z) ==
            doctest::Approx(fd_derivative([&](double u) { return m->log_init(u); }, z, h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("gamma equals the finite-difference gradient of log_joint") {
  Random rng(3);
  for (Eigen::Index T : {1, 2, 5, 12}) {
    for (int trial = 0; trial < 5; ++trial) {
      for (const auto& m : random_models(rng, T)) {
        INFO(m->name() << " T=" << T);
        const VectorXd z = rng.normal_vector(T);
        const VectorXd fd = fd_gradient([&](const VectorXd& u) { return log_joint(*m, u); }, z, 1e-5);
        const VectorXd g = gamma(*m, z);
        CHECK((g - fd).lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, g.lpNorm<Eigen::Infinity>()));
      }
    }
  }
}

TEST_CASE("Wiener log_joint equals the dense prior density plus the likelihood") {
  Random rng(4);
  for (Eigen::Index T : {1, 2, 7, 32}) {
    const double s0 = 1.3, s = 0.6, tau = 2.5;
    const VectorXd x = rng.normal_vector(T), z = rng.normal_vector(T);
    const WienerGaussian m(x, s0, s, tau);
    const double prior = structvi::testing::dense_gaussian_log_pdf(
        z, VectorXd::Zero(T), structvi::testing::wiener_prior_covariance(s0, s, T));
    const double lik = -0.5 * T * std::log(2.0 * std::numbers::pi / tau) - 0.5 * tau * (x - z).squaredNorm();
    CHECK(log_joint(m, z) == doctest::Approx(prior + lik).epsilon(1e-10));
  }
}

TEST_CASE("extreme latent values stay finite") {
  const OuBernoulli b(vec({1, 0}), 0.5, 1.0);
  for (double z : {-500.0, 500.0}) {
    CHECK(std::isfinite(b.log_lik(0, z)));
    CHECK(std::isfinite(b.log_lik(1, z)));
    CHECK(std::isfinite(b.dlog_lik(0, z)));
  }
  CHECK(b.log_lik(0, 500.0) == doctest::Approx(0.0));
  CHECK(b.log_lik(0, -500.0) == doctest::Approx(-500.0));
  CHECK(b.dlog_lik(1, 500.0) == doctest::Approx(-1.0));

  const OuPoisson p(vec({2}), 0.5, 1.0);
  const auto before = p.clamped_evaluations();
  CHECK(std::isfinite(p.dlog_lik(0, 1000.0)));
  CHECK(p.dlog_lik(0, 1000.0) == doctest::Approx(2.0 - std::exp(OuPoisson::kClampZ)));
  CHECK(p.clamped_evaluations() == before + 2);
  (void)p.dlog_lik(0, 1.0);
  CHECK(p.clamped_evaluations() == before + 2);
}

TEST_CASE("masked steps contribute nothing") {
  const WienerGaussian full(vec({1.0, 3.0, -1.0}), 1, 1, 1);
  const WienerGaussian masked(vec({1.0, 3.0, -1.0}), 1, 1, 1, {true, false, true});
  const VectorXd z = vec({0.2, 0.4, 0.1});
  CHECK(masked.log_lik(1, 0.4) == 0.0);
  CHECK(masked.dlog_lik(1, 0.4) == 0.0);
  CHECK(log_joint(full, z) - log_joint(masked, z) == doctest::Approx(full.log_lik(1, 0.4)));
  // A masked observation may hold a placeholder value.
  CHECK_NOTHROW(WienerGaussian(vec({1.0, NAN}), 1, 1, 1, {true, false}));
  CHECK_THROWS_AS(WienerGaussian(vec({1.0, NAN}), 1, 1, 1), ArgumentError);
  CHECK_THROWS_AS(WienerGaussian(vec({1.0, 2.0}), 1, 1, 1, {true}), ArgumentError);
}

TEST_CASE("hyperparameter and observation validation") {
  CHECK_THROWS_AS(WienerGaussian(vec({0}), 0, 1, 1), ArgumentError);
  CHECK_THROWS_AS(WienerGaussian(vec({0}), 1, -1, 1), ArgumentError);
  CHECK_THROWS_AS(WienerGaussian(vec({0}), 1, 1, 0), ArgumentError);
  CHECK_THROWS_AS(OuPoisson(vec({-1}), 0.5, 1), ArgumentError);
  CHECK_THROWS_AS(OuPoisson(vec({1}), 1.0, 1), ArgumentError);
  CHECK_THROWS_AS(OuPoisson(vec({1}), 0.0, 1), ArgumentError);
  CHECK_THROWS_AS(OuPoisson(vec({1}), 0.5, 0), ArgumentError);
  CHECK_THROWS_AS(OuBernoulli(vec({2}), 0.5, 1), ArgumentError);
  CHECK_THROWS_AS(OuBernoulli(vec({0.5}), 0.5, 1), ArgumentError);
}

TEST_CASE("prior marginal standard deviations") {
  const WienerGaussian w(vec({0, 0, 0}), 2.0, 0.5, 1.0);
  CHECK(w.prior_marginal_std(0) == doctest::Approx(2.0));
  CHECK(w.prior_marginal_std(2) == doctest::Approx(std::sqrt(4.0 + 2 * 0.25)));
  const OuPoisson p(vec({0}), 0.6, 0.8);
  CHECK(p.prior_marginal_std(0) == doctest::Approx(0.8 / std::sqrt(1 - 0.36)));
}

TEST_CASE("simulators are seeded and respect the observation domain") {
  const auto a = simulate_wiener_gaussian(50, 1, 1, 1, 3);
  const auto b = simulate_wiener_gaussian(50, 1, 1, 1, 3);
  CHECK(a.x == b.x);
  CHECK(a.z == b.z);
  CHECK(simulate_wiener_gaussian(50, 1, 1, 1, 4).x != a.x);
  const auto p = simulate_ou_poisson(200, 0.9, 0.3, 1);
  CHECK((p.x.array() >= 0).all());
  CHECK((p.x.array() == p.x.array().floor()).all());
  const auto q = simulate_ou_bernoulli(200, 0.9, 0.3, 1);
  CHECK((q.x.array() * (1 - q.x.array()) == 0).all());
  CHECK_NOTHROW(OuPoisson(p.x, 0.9, 0.3));
  CHECK_NOTHROW(OuBernoulli(q.x, 0.9, 0.3));
}
