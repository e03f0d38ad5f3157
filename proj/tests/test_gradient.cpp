#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "structvi/errors.hpp"
#include "structvi/gradient.hpp"

using namespace structvi;
using structvi::testing::Random;
using structvi::testing::random_models;
using Eigen::VectorXd;

namespace {

StructuredGaussiand random_q(Random& rng, Eigen::Index T) {
  return StructuredGaussiand(rng.normal_vector(T, 0.5), rng.uniform_vector(T, 0.5, 2.5),
                             rng.uniform_vector(T - 1, -1.0, 1.0));
}

SampleBatch<double> batch_from(const StructuredGaussiand& q, const std::vector<VectorXd>& eps) {
  SampleBatch<double> batch;
  for (const auto& e : eps) batch.push_back({{e, 0}, reparameterize(q, e)});
  return batch;
}

double max_abs_diff(const GradEstimate& a, const GradEstimate& b) {
  double d = (a.g_mu - b.g_mu).lpNorm<Eigen::Infinity>();
  d = std::max(d, (a.g_nu - b.g_nu).lpNorm<Eigen::Infinity>());
  if (a.g_omega.size() > 0) d = std::max(d, (a.g_omega - b.g_omega).lpNorm<Eigen::Infinity>());
  return std::max(d, std::abs(a.elbo_estimate - b.elbo_estimate));
}

VectorXd flatten(const GradEstimate& g) {
  const Eigen::Index T = g.g_mu.size();
  VectorXd out(3 * T - 1);
  out << g.g_mu, g.g_nu, g.g_omega;
  return out;
}

}  // namespace

TEST_CASE("zero noise leaves only gamma at the mean and the entropy term") {
  Random rng(1);
  for (const auto& m : random_models(rng, 5)) {
    const auto q = random_q(rng, 5);
    const auto batch = batch_from(q, {VectorXd::Zero(5)});
    for (const auto& g : {estimate_gradient(*m, q, batch), estimate_gradient_dense(*m, q, batch)}) {
      CHECK((g.g_mu - gamma(*m, q.mu())).lpNorm<Eigen::Infinity>() <= 1e-14);
      CHECK((g.g_nu + q.nu().cwiseInverse()).lpNorm<Eigen::Infinity>() <= 1e-14);
      CHECK(g.g_omega.isZero(0.0));
      CHECK(g.elbo_estimate == doctest::Approx(log_joint(*m, q.mu()) + entropy(q)));
      CHECK(g.samples == 1);
    }
    CHECK(estimate_elbo(*m, q, batch) == doctest::Approx(log_joint(*m, q.mu()) + entropy(q)));
  }
}

TEST_CASE("O(T) and dense estimators agree") {
  Random rng(2);
  for (Eigen::Index T : {1, 2, 3, 8, 32}) {
    for (int trial = 0; trial < 10; ++trial) {
      for (const auto& m : random_models(rng, T)) {
        const auto q = random_q(rng, T);
        const auto batch = sample_batch(q, 100 + trial, 3, T);
        INFO(m->name() << " T=" << T);
        CHECK(max_abs_diff(estimate_gradient(*m, q, batch), estimate_gradient_dense(*m, q, batch)) <= 1e-10);
      }
    }
  }
}

TEST_CASE("gradient matches finite differences of the fixed-noise objective") {
  Random rng(3);
  const Eigen::Index T = 6;
  for (const auto& m : random_models(rng, T)) {
    const auto q = random_q(rng, T);
    std::vector<VectorXd> eps;
    for (int s = 0; s < 3; ++s) eps.push_back(rng.normal_vector(T));
    VectorXd lambda(3 * T - 1);
    lambda << q.mu(), q.nu(), q.omega();
    const VectorXd fd = structvi::testing::fd_gradient(
        [&](const VectorXd& l) { return structvi::testing::fixed_noise_objective(*m, eps, l); }, lambda, 1e-6);
    const auto batch = batch_from(q, eps);
    for (const VectorXd& an : {flatten(estimate_gradient(*m, q, batch)),
                               flatten(estimate_gradient_dense(*m, q, batch))}) {
      for (Eigen::Index i = 0; i < an.size(); ++i) {
        INFO(m->name() << " parameter " << i);
        CHECK(std::abs(fd[i] - an[i]) / std::max(1.0, std::abs(an[i])) <= 1e-5);
      }
    }
  }
}

TEST_CASE("mean-field gradient matches the direct chain rule") {
  // With omega = 0, z_t = mu_t + eps_t / nu_t, so dz_t/dnu_t = -eps_t / nu_t^2
  // and dz_t/domega_t = -y_{t+1} / nu_t.
  Random rng(4);
  const Eigen::Index T = 7;
  for (const auto& m : random_models(rng, T)) {
    const auto q = mean_field(rng.normal_vector(T), rng.uniform_vector(T, 0.5, 2.0));
    const auto batch = sample_batch(q, 5, 4);
    VectorXd g_nu = VectorXd::Zero(T), g_omega = VectorXd::Zero(T - 1), g_mu = VectorXd::Zero(T);
    for (const auto& s : batch) {
      const VectorXd g = gamma(*m, s.z);
      const VectorXd y = s.noise.eps.cwiseQuotient(q.nu());
      g_mu += g;
      g_nu -= g.cwiseProduct(s.noise.eps).cwiseQuotient(q.nu().cwiseAbs2());
      for (Eigen::Index t = 0; t + 1 < T; ++t) g_omega[t] -= g[t] * y[t + 1] / q.nu()[t];
    }
    const double S = static_cast<double>(batch.size());
    const auto est = estimate_gradient(*m, q, batch);
    CHECK((est.g_mu - g_mu / S).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((est.g_nu - (g_nu / S - q.nu().cwiseInverse())).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK((est.g_omega - g_omega / S).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("batch validation") {
  Random rng(5);
  const auto m = random_models(rng, 4)[0];
  const auto q = random_q(rng, 4);
  auto batch = sample_batch(q, 1, 3);
  CHECK_THROWS_AS(estimate_gradient(*m, q, SampleBatch<double>{}), ArgumentError);
  CHECK_THROWS_AS(estimate_gradient(*m, random_q(rng, 5), batch), ArgumentError);
  CHECK_THROWS_AS(estimate_elbo(*m, random_q(rng, 5), batch), ArgumentError);
  batch[1].noise.eps.resize(0);
  CHECK_THROWS_AS(estimate_gradient(*m, q, batch), ContractError);
  CHECK_THROWS_AS(estimate_gradient_dense(*m, q, batch), ContractError);

  const auto big = random_models(rng, kMaxDenseSize + 1)[0];
  const auto qb = random_q(rng, kMaxDenseSize + 1);
  const auto bb = sample_batch(qb, 1, 1);
  CHECK_NOTHROW(estimate_gradient(*big, qb, bb));
  CHECK_THROWS_AS(estimate_gradient_dense(*big, qb, bb), SizeError);
}

TEST_CASE("estimates do not depend on batch order") {
  Random rng(6);
  for (const auto& m : random_models(rng, 9)) {
    const auto q = random_q(rng, 9);
    auto batch = sample_batch(q, 7, 20);
    const auto a = estimate_gradient(*m, q, batch);
    std::reverse(batch.begin(), batch.end());
    const auto b = estimate_gradient(*m, q, batch);
    CHECK(max_abs_diff(a, b) <= 1e-12);
    CHECK(estimate_elbo(*m, q, batch) == doctest::Approx(a.elbo_estimate).epsilon(1e-12));
  }
}

TEST_CASE("estimates are bitwise identical across worker counts") {
  Random rng(7);
  const auto m = random_models(rng, 30)[1];
  const auto q = random_q(rng, 30);
  auto run = [&](const char* threads) {
    setenv("STRUCTVI_THREADS", threads, 1);
    const auto batch = sample_batch(q, 11, 37);
    return estimate_gradient(*m, q, batch);
  };
  const auto one = run("1");
  const auto four = run("4");
  unsetenv("STRUCTVI_THREADS");
  CHECK(one.g_mu == four.g_mu);
  CHECK(one.g_nu == four.g_nu);
  CHECK(one.g_omega == four.g_omega);
  CHECK(one.elbo_estimate == four.elbo_estimate);
}

TEST_CASE("ELBO estimate approaches the exact log evidence at the exact posterior") {
  // The exact posterior written as a member of the family: dense posterior
  // precision, Cholesky factor read back into (nu, omega).
  Random rng(8);
  const Eigen::Index T = 10;
  const double s0 = 1.0, s = 0.7, tau = 1.5;
  const VectorXd x = rng.normal_vector(T);
  const WienerGaussian m(x, s0, s, tau);
  const Eigen::MatrixXd prior = structvi::testing::wiener_prior_covariance(s0, s, T);
  const Eigen::MatrixXd precision = prior.inverse() + tau * Eigen::MatrixXd::Identity(T, T);
  const VectorXd mean = precision.llt().solve(tau * x);
  const Eigen::MatrixXd U = precision.llt().matrixU();
  const StructuredGaussiand q(mean, U.diagonal(), U.diagonal(1));

  const auto batch = sample_batch(q, 3, 4000);
  const double expected = structvi::testing::dense_wiener_log_evidence(s0, s, tau, x);
  // At the exact posterior log p(x, z) - log q(z) = log p(x) for every z, so
  // the estimate is exact up to rounding.
  CHECK(estimate_elbo(m, q, batch) == doctest::Approx(expected).epsilon(0.01));
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(log_joint(m, batch[i].z) - log_density(q, batch[i].z) == doctest::Approx(expected).epsilon(1e-9));
  }
}
