#include "structvi/kalman.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "structvi/errors.hpp"

namespace structvi {
namespace {

void require_positive(double value, const char* what) {
  if (!(value > 0) || !std::isfinite(value)) {
    throw ArgumentError(std::string(what) + " must be positive and finite");
  }
}

bool is_observed(const ObservationMask& mask, Eigen::Index t) {
  return mask.empty() || mask[static_cast<std::size_t>(t)];
}

}  // namespace

SymTridiagd prior_precision(double sigma0, double sigma, Eigen::Index T) {
  require_positive(sigma0, "prior_precision: sigma0");
  require_positive(sigma, "prior_precision: sigma");
  if (T < 1) throw ArgumentError("prior_precision: T must be at least 1");
  const double step = 1.0 / (sigma * sigma);
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(T, 2.0 * step);
  diag[0] = 1.0 / (sigma0 * sigma0) + (T > 1 ? step : 0.0);
  if (T > 1) diag[T - 1] = step;
  return SymTridiagd(std::move(diag), Eigen::VectorXd::Constant(T - 1, -step));
}

WienerPosterior exact_posterior(double sigma0, double sigma, double tau, const Eigen::VectorXd& x,
                                const ObservationMask& mask) {
  require_positive(tau, "exact_posterior: tau");
  const Eigen::Index T = x.size();
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(T)) {
    throw ArgumentError("exact_posterior: mask length does not match T");
  }
  const SymTridiagd prior = prior_precision(sigma0, sigma, T);

  Eigen::VectorXd diag = prior.diag();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!is_observed(mask, t)) continue;
    diag[t] += tau;
    rhs[t] = tau * x[t];
  }
  SymTridiagd precision(std::move(diag), prior.offdiag());
  Eigen::VectorXd mean = tridiag_solve(precision, rhs);
  return WienerPosterior{std::move(mean), std::move(precision)};
}

WienerPosterior exact_posterior(const WienerGaussian& m) {
  return exact_posterior(m.sigma0(), m.sigma(), m.tau(), m.observations(), m.mask());
}

BidiagUpperd cholesky_factor(const SymTridiagd& A) {
  const Eigen::Index T = A.size();
  Eigen::VectorXd nu(T);
  Eigen::VectorXd omega(T - 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double pivot = A.diag()[t] - (t > 0 ? omega[t - 1] * omega[t - 1] : 0.0);
    if (!(pivot > 0)) {
      throw NotPositiveDefiniteError(
          "cholesky_factor: non-positive pivot at index " + std::to_string(t),
          static_cast<std::size_t>(t));
    }
    nu[t] = std::sqrt(pivot);
    if (t + 1 < T) omega[t] = A.offdiag()[t] / nu[t];
  }
  return BidiagUpperd(std::move(nu), std::move(omega));
}

Eigen::VectorXd posterior_marginal_variances(const WienerPosterior& p) {
  return marginal_variances(cholesky_factor(p.precision));
}

StructuredGaussiand as_variational(const WienerPosterior& p) {
  return StructuredGaussiand(p.mean, cholesky_factor(p.precision));
}

double log_evidence(const WienerGaussian& m) {
  const WienerPosterior post = exact_posterior(m);
  const BidiagUpperd chol = cholesky_factor(post.precision);
  // log p(mu | x) = -(T/2) log 2 pi + (1/2) log det Lambda at the mode.
  const double log_posterior_at_mode =
      -0.5 * static_cast<double>(m.size()) * std::log(2.0 * std::numbers::pi) + log_det(chol);
  return log_joint(m, post.mean) - log_posterior_at_mode;
}

double analytic_elbo(const WienerGaussian& m, const StructuredGaussiand& q) {
  if (m.size() != q.size()) throw ArgumentError("analytic_elbo: model and q disagree on T");
  const Eigen::Index T = q.size();
  const Eigen::VectorXd& mu = q.mu();
  const Eigen::VectorXd var = marginal_variances(q);
  const Eigen::VectorXd cov = lag_one_covariances(q);
  const double log_2pi = std::log(2.0 * std::numbers::pi);

  const double s0sq = m.sigma0() * m.sigma0();
  const double ssq = m.sigma() * m.sigma();
  double expected = -0.5 * (log_2pi + std::log(s0sq)) - 0.5 * (mu[0] * mu[0] + var[0]) / s0sq;
  for (Eigen::Index t = 1; t < T; ++t) {
    const double dmu = mu[t] - mu[t - 1];
    const double second_moment = dmu * dmu + var[t] + var[t - 1] - 2.0 * cov[t - 1];
    expected += -0.5 * (log_2pi + std::log(ssq)) - 0.5 * second_moment / ssq;
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    if (!m.observed(t)) continue;
    const double r = m.observations()[t] - mu[t];
    expected += 0.5 * (std::log(m.tau()) - log_2pi) - 0.5 * m.tau() * (r * r + var[t]);
  }
  return expected + entropy(q);
}

double kl_divergence(const StructuredGaussiand& q, const WienerPosterior& p) {
  const Eigen::Index T = q.size();
  if (p.mean.size() != T) throw ArgumentError("kl_divergence: q and posterior disagree on T");
  const SymTridiagd& lambda = p.precision;

  // tr(Lambda_p Sigma_q) needs only the tridiagonal band of Sigma_q.
  const Eigen::VectorXd var = marginal_variances(q);
  const Eigen::VectorXd cov = lag_one_covariances(q);
  const double trace = lambda.diag().dot(var) + 2.0 * lambda.offdiag().dot(cov);

  const Eigen::VectorXd delta = p.mean - q.mu();
  const double mahalanobis = delta.dot(matvec(lambda, delta));

  // log det Lambda_q - log det Lambda_p, both from bidiagonal factors.
  const double log_det_ratio = 2.0 * (log_det(q.factor()) - log_det(cholesky_factor(lambda)));
  return 0.5 * (trace + mahalanobis - static_cast<double>(T) + log_det_ratio);
}

}  // namespace structvi
