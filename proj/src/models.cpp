#include "structvi/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "structvi/bidiag.hpp"
#include "structvi/errors.hpp"
#include "structvi/rng.hpp"

namespace structvi {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gaussian_log_density(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * d * d / variance;
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_positive(double value, const char* what) {
  if (!(value > 0) || !std::isfinite(value)) {
    throw ArgumentError(std::string(what) + " must be positive and finite");
  }
}

// Step key used for simulation substreams, disjoint from optimizer steps in practice.
constexpr std::uint64_t kSimulationStep = 0xffffffffffff0001ULL;

}  // namespace

double log_joint(const TimeSeriesModel& m, const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::Index T = m.size();
  detail::require_length(z, T, "log_joint");
  double total = m.log_init(z[0]) + m.log_lik(0, z[0]);
  for (Eigen::Index t = 1; t < T; ++t) {
    total += m.log_trans(t, z[t], z[t - 1]) + m.log_lik(t, z[t]);
  }
  return total;
}

Eigen::VectorXd gamma(const TimeSeriesModel& m, const Eigen::Ref<const Eigen::VectorXd>& z) {
  const Eigen::Index T = m.size();
  detail::require_length(z, T, "gamma");
  Eigen::VectorXd g(T);
  g[0] = m.dlog_init(z[0]) + m.dlog_lik(0, z[0]);
  for (Eigen::Index t = 1; t < T; ++t) {
    g[t] = m.dlog_trans_curr(t, z[t], z[t - 1]) + m.dlog_lik(t, z[t]);
    g[t - 1] += m.dlog_trans_prev(t, z[t], z[t - 1]);
  }
  return g;
}

ObservedSeries::ObservedSeries(Eigen::VectorXd x, ObservationMask mask)
    : x_(std::move(x)), mask_(std::move(mask)) {
  if (x_.size() < 1) throw ArgumentError("model: at least one time step is required");
  if (!mask_.empty() && mask_.size() != static_cast<std::size_t>(x_.size())) {
    throw ArgumentError("model: mask length " + std::to_string(mask_.size()) +
                        " does not match T = " + std::to_string(x_.size()));
  }
  for (Eigen::Index t = 0; t < x_.size(); ++t) {
    if (observed(t) && !std::isfinite(x_[t])) {
      throw ArgumentError("model: observation " + std::to_string(t) + " is not finite");
    }
  }
}

// ---- WienerGaussian ----

WienerGaussian::WienerGaussian(Eigen::VectorXd x, double sigma0, double sigma, double tau,
                               ObservationMask mask)
    : ObservedSeries(std::move(x), std::move(mask)), sigma0_(sigma0), sigma_(sigma), tau_(tau) {
  require_positive(sigma0, "wiener_gaussian: sigma0");
  require_positive(sigma, "wiener_gaussian: sigma");
  require_positive(tau, "wiener_gaussian: tau");
}

double WienerGaussian::log_lik(Eigen::Index t, double z) const {
  return observed(t) ? gaussian_log_density(x_[t], z, 1.0 / tau_) : 0.0;
}

double WienerGaussian::dlog_lik(Eigen::Index t, double z) const {
  return observed(t) ? tau_ * (x_[t] - z) : 0.0;
}

double WienerGaussian::log_trans(Eigen::Index, double z, double z_prev) const {
  return gaussian_log_density(z, z_prev, sigma_ * sigma_);
}

double WienerGaussian::dlog_trans_curr(Eigen::Index, double z, double z_prev) const {
  return -(z - z_prev) / (sigma_ * sigma_);
}

double WienerGaussian::dlog_trans_prev(Eigen::Index, double z, double z_prev) const {
  return (z - z_prev) / (sigma_ * sigma_);
}

double WienerGaussian::log_init(double z) const {
  return gaussian_log_density(z, 0.0, sigma0_ * sigma0_);
}

double WienerGaussian::dlog_init(double z) const { return -z / (sigma0_ * sigma0_); }

double WienerGaussian::prior_marginal_std(Eigen::Index t) const {
  return std::sqrt(sigma0_ * sigma0_ + static_cast<double>(t) * sigma_ * sigma_);
}

// ---- OU prior ----

OrnsteinUhlenbeckPrior::OrnsteinUhlenbeckPrior(double c, double sigma) : c_(c), sigma_(sigma) {
  if (!(c > 0 && c < 1)) throw ArgumentError("ou prior: c must lie in (0, 1)");
  require_positive(sigma, "ou prior: sigma");
  stationary_std_ = sigma / std::sqrt(1.0 - c * c);
}

double OrnsteinUhlenbeckPrior::ou_log_trans(double z, double z_prev) const {
  return gaussian_log_density(z, c_ * z_prev, sigma_ * sigma_);
}

double OrnsteinUhlenbeckPrior::ou_dlog_trans_curr(double z, double z_prev) const {
  return -(z - c_ * z_prev) / (sigma_ * sigma_);
}

double OrnsteinUhlenbeckPrior::ou_dlog_trans_prev(double z, double z_prev) const {
  return c_ * (z - c_ * z_prev) / (sigma_ * sigma_);
}

double OrnsteinUhlenbeckPrior::ou_log_init(double z) const {
  return gaussian_log_density(z, 0.0, stationary_std_ * stationary_std_);
}

double OrnsteinUhlenbeckPrior::ou_dlog_init(double z) const {
  return -z / (stationary_std_ * stationary_std_);
}

// ---- OuPoisson ----

OuPoisson::OuPoisson(Eigen::VectorXd counts, double c, double sigma, ObservationMask mask)
    : ObservedSeries(std::move(counts), std::move(mask)), OrnsteinUhlenbeckPrior(c, sigma) {
  log_factorial_.resize(x_.size());
  for (Eigen::Index t = 0; t < x_.size(); ++t) {
    if (!observed(t)) {
      log_factorial_[t] = 0.0;
      continue;
    }
    if (x_[t] < 0 || x_[t] != std::floor(x_[t])) {
      throw ArgumentError("ou_poisson: observation " + std::to_string(t) +
                          " is not a non-negative integer count");
    }
    log_factorial_[t] = std::lgamma(x_[t] + 1.0);
  }
}

double OuPoisson::log_lik(Eigen::Index t, double z) const {
  if (!observed(t)) return 0.0;
  return x_[t] * z - std::exp(z) - log_factorial_[t];
}

double OuPoisson::dlog_lik(Eigen::Index t, double z) const {
  if (!observed(t)) return 0.0;
  if (z > kClampZ) {
    clamped_.fetch_add(1, std::memory_order_relaxed);
    z = kClampZ;
  }
  return x_[t] - std::exp(z);
}

// ---- OuBernoulli ----

OuBernoulli::OuBernoulli(Eigen::VectorXd x, double c, double sigma, ObservationMask mask)
    : ObservedSeries(std::move(x), std::move(mask)), OrnsteinUhlenbeckPrior(c, sigma) {
  for (Eigen::Index t = 0; t < x_.size(); ++t) {
    if (observed(t) && x_[t] != 0.0 && x_[t] != 1.0) {
      throw ArgumentError("ou_bernoulli: observation " + std::to_string(t) + " is not 0 or 1");
    }
  }
}

double OuBernoulli::log_lik(Eigen::Index t, double z) const {
  if (!observed(t)) return 0.0;
  // x log s(z) + (1-x) log s(-z), with log s(z) = -softplus(-z).
  return x_[t] == 1.0 ? -softplus(-z) : -softplus(z);
}

double OuBernoulli::dlog_lik(Eigen::Index t, double z) const {
  return observed(t) ? x_[t] - sigmoid(z) : 0.0;
}

// ---- factories ----

std::shared_ptr<const WienerGaussian> wiener_gaussian(Eigen::VectorXd x, double sigma0,
                                                      double sigma, double tau,
                                                      ObservationMask mask) {
  return std::make_shared<const WienerGaussian>(std::move(x), sigma0, sigma, tau, std::move(mask));
}

std::shared_ptr<const OuPoisson> ou_poisson(Eigen::VectorXd counts, double c, double sigma,
                                            ObservationMask mask) {
  return std::make_shared<const OuPoisson>(std::move(counts), c, sigma, std::move(mask));
}

std::shared_ptr<const OuBernoulli> ou_bernoulli(Eigen::VectorXd x, double c, double sigma,
                                                ObservationMask mask) {
  return std::make_shared<const OuBernoulli>(std::move(x), c, sigma, std::move(mask));
}

// ---- simulation ----

namespace {

Eigen::VectorXd simulate_markov_chain(Eigen::Index T, double init_std, double coefficient,
                                      double step_std, CounterStream& stream) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(T);
  z[0] = init_std * normal(stream);
  for (Eigen::Index t = 1; t < T; ++t) z[t] = coefficient * z[t - 1] + step_std * normal(stream);
  return z;
}

}  // namespace

SimulatedSeries simulate_wiener_gaussian(Eigen::Index T, double sigma0, double sigma, double tau,
                                         std::uint64_t seed) {
  if (T < 1) throw ArgumentError("simulate: T must be at least 1");
  require_positive(sigma0, "simulate: sigma0");
  require_positive(sigma, "simulate: sigma");
  require_positive(tau, "simulate: tau");
  CounterStream stream(seed, kSimulationStep, 0);
  SimulatedSeries out;
  out.z = simulate_markov_chain(T, sigma0, 1.0, sigma, stream);
  std::normal_distribution<double> normal;
  out.x.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) out.x[t] = out.z[t] + normal(stream) / std::sqrt(tau);
  return out;
}

SimulatedSeries simulate_ou_poisson(Eigen::Index T, double c, double sigma, std::uint64_t seed) {
  if (T < 1) throw ArgumentError("simulate: T must be at least 1");
  const OrnsteinUhlenbeckPrior prior(c, sigma);
  CounterStream stream(seed, kSimulationStep, 1);
  SimulatedSeries out;
  out.z = simulate_markov_chain(T, prior.stationary_std(), c, sigma, stream);
  out.x.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    std::poisson_distribution<long long> poisson(std::exp(out.z[t]));
    out.x[t] = static_cast<double>(poisson(stream));
  }
  return out;
}

SimulatedSeries simulate_ou_bernoulli(Eigen::Index T, double c, double sigma, std::uint64_t seed) {
  if (T < 1) throw ArgumentError("simulate: T must be at least 1");
  const OrnsteinUhlenbeckPrior prior(c, sigma);
  CounterStream stream(seed, kSimulationStep, 2);
  SimulatedSeries out;
  out.z = simulate_markov_chain(T, prior.stationary_std(), c, sigma, stream);
  out.x.resize(T);
  std::uniform_real_distribution<double> uniform;
  for (Eigen::Index t = 0; t < T; ++t) out.x[t] = uniform(stream) < sigmoid(out.z[t]) ? 1.0 : 0.0;
  return out;
}

}  // namespace structvi
