#pragma once

// Latent time series models with a first-order Markov prior,
//
//     p(x, z) = p(z_1) prod_{t>1} p(z_t | z_{t-1}) prod_t p(x_t | z_t).
//
// Time indices in this API are zero-based: t = 0 is the first step and
// transition callbacks are defined for 1 <= t < T.

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace structvi {

/// Per-step observation mask; true means observed. Empty means "all observed".
using ObservationMask = std::vector<bool>;

class TimeSeriesModel {
 public:
  virtual ~TimeSeriesModel() = default;

  virtual Eigen::Index size() const = 0;
  virtual std::string name() const = 0;

  /// log p(x_t | z_t) and its derivative in z_t. Zero for masked steps.
  virtual double log_lik(Eigen::Index t, double z) const = 0;
  virtual double dlog_lik(Eigen::Index t, double z) const = 0;

  /// log p(z_t | z_{t-1}) for t >= 1, with partials in z_t and z_{t-1}.
  virtual double log_trans(Eigen::Index t, double z, double z_prev) const = 0;
  virtual double dlog_trans_curr(Eigen::Index t, double z, double z_prev) const = 0;
  virtual double dlog_trans_prev(Eigen::Index t, double z, double z_prev) const = 0;

  /// log p(z_1) and its derivative.
  virtual double log_init(double z) const = 0;
  virtual double dlog_init(double z) const = 0;

  /// Standard deviation of the prior marginal of z_t; sets the trainer's
  /// default initialization.
  virtual double prior_marginal_std(Eigen::Index t) const = 0;
};

using ModelPtr = std::shared_ptr<const TimeSeriesModel>;

/// log p(x, z).
double log_joint(const TimeSeriesModel& m, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Gradient of log p(x, z) in z. Only the three factors touching z_t
/// contribute to component t; the forward transition term is absent at the
/// last step and the first step uses the initial density.
Eigen::VectorXd gamma(const TimeSeriesModel& m, const Eigen::Ref<const Eigen::VectorXd>& z);

/// Observations plus an optional mask, shared by the built-in models.
class ObservedSeries {
 public:
  ObservedSeries(Eigen::VectorXd x, ObservationMask mask);

  const Eigen::VectorXd& observations() const { return x_; }
  const ObservationMask& mask() const { return mask_; }
  bool observed(Eigen::Index t) const { return mask_.empty() || mask_[static_cast<std::size_t>(t)]; }

 protected:
  Eigen::VectorXd x_;
  ObservationMask mask_;
};

/// Wiener process prior z_1 ~ N(0, sigma0^2), z_t | z_{t-1} ~ N(z_{t-1}, sigma^2)
/// with Gaussian likelihood x_t ~ N(z_t, 1/tau).
class WienerGaussian final : public TimeSeriesModel, public ObservedSeries {
 public:
  WienerGaussian(Eigen::VectorXd x, double sigma0, double sigma, double tau,
                 ObservationMask mask = {});

  Eigen::Index size() const override { return x_.size(); }
  std::string name() const override { return "wiener_gaussian"; }

  double log_lik(Eigen::Index t, double z) const override;
  double dlog_lik(Eigen::Index t, double z) const override;
  double log_trans(Eigen::Index t, double z, double z_prev) const override;
  double dlog_trans_curr(Eigen::Index t, double z, double z_prev) const override;
  double dlog_trans_prev(Eigen::Index t, double z, double z_prev) const override;
  double log_init(double z) const override;
  double dlog_init(double z) const override;
  double prior_marginal_std(Eigen::Index t) const override;

  double sigma0() const { return sigma0_; }
  double sigma() const { return sigma_; }
  double tau() const { return tau_; }

 private:
  double sigma0_, sigma_, tau_;
};

/// Stationary Ornstein-Uhlenbeck prior shared by the non-conjugate models:
/// z_1 ~ N(0, sigma^2/(1-c^2)), z_t | z_{t-1} ~ N(c z_{t-1}, sigma^2).
class OrnsteinUhlenbeckPrior {
 public:
  OrnsteinUhlenbeckPrior(double c, double sigma);

  double c() const { return c_; }
  double sigma() const { return sigma_; }
  double stationary_std() const { return stationary_std_; }

 protected:
  double ou_log_trans(double z, double z_prev) const;
  double ou_dlog_trans_curr(double z, double z_prev) const;
  double ou_dlog_trans_prev(double z, double z_prev) const;
  double ou_log_init(double z) const;
  double ou_dlog_init(double z) const;

 private:
  double c_, sigma_, stationary_std_;
};

/// OU prior with Poisson counts x_t ~ Poisson(exp(z_t)).
class OuPoisson final : public TimeSeriesModel,
                        public ObservedSeries,
                        public OrnsteinUhlenbeckPrior {
 public:
  /// exp(z) in the derivative path is evaluated at min(z, kClampZ).
  static constexpr double kClampZ = 30.0;

  OuPoisson(Eigen::VectorXd counts, double c, double sigma, ObservationMask mask = {});

  Eigen::Index size() const override { return x_.size(); }
  std::string name() const override { return "ou_poisson"; }

  double log_lik(Eigen::Index t, double z) const override;
  double dlog_lik(Eigen::Index t, double z) const override;
  double log_trans(Eigen::Index, double z, double z_prev) const override { return ou_log_trans(z, z_prev); }
  double dlog_trans_curr(Eigen::Index, double z, double z_prev) const override {
    return ou_dlog_trans_curr(z, z_prev);
  }
  double dlog_trans_prev(Eigen::Index, double z, double z_prev) const override {
    return ou_dlog_trans_prev(z, z_prev);
  }
  double log_init(double z) const override { return ou_log_init(z); }
  double dlog_init(double z) const override { return ou_dlog_init(z); }
  double prior_marginal_std(Eigen::Index) const override { return stationary_std(); }

  /// How many derivative evaluations hit the exp clamp so far.
  std::uint64_t clamped_evaluations() const { return clamped_.load(std::memory_order_relaxed); }

 private:
  Eigen::VectorXd log_factorial_;
  mutable std::atomic<std::uint64_t> clamped_{0};
};

/// OU prior with binary observations x_t ~ Bernoulli(sigmoid(z_t)).
class OuBernoulli final : public TimeSeriesModel,
                          public ObservedSeries,
                          public OrnsteinUhlenbeckPrior {
 public:
  OuBernoulli(Eigen::VectorXd x, double c, double sigma, ObservationMask mask = {});

  Eigen::Index size() const override { return x_.size(); }
  std::string name() const override { return "ou_bernoulli"; }

  double log_lik(Eigen::Index t, double z) const override;
  double dlog_lik(Eigen::Index t, double z) const override;
  double log_trans(Eigen::Index, double z, double z_prev) const override { return ou_log_trans(z, z_prev); }
  double dlog_trans_curr(Eigen::Index, double z, double z_prev) const override {
    return ou_dlog_trans_curr(z, z_prev);
  }
  double dlog_trans_prev(Eigen::Index, double z, double z_prev) const override {
    return ou_dlog_trans_prev(z, z_prev);
  }
  double log_init(double z) const override { return ou_log_init(z); }
  double dlog_init(double z) const override { return ou_dlog_init(z); }
  double prior_marginal_std(Eigen::Index) const override { return stationary_std(); }
};

std::shared_ptr<const WienerGaussian> wiener_gaussian(Eigen::VectorXd x, double sigma0,
                                                      double sigma, double tau,
                                                      ObservationMask mask = {});
std::shared_ptr<const OuPoisson> ou_poisson(Eigen::VectorXd counts, double c, double sigma,
                                            ObservationMask mask = {});
std::shared_ptr<const OuBernoulli> ou_bernoulli(Eigen::VectorXd x, double c, double sigma,
                                                ObservationMask mask = {});

/// A latent path and observations drawn from a model's generative process.
struct SimulatedSeries {
  Eigen::VectorXd z;
  Eigen::VectorXd x;
};

SimulatedSeries simulate_wiener_gaussian(Eigen::Index T, double sigma0, double sigma, double tau,
                                         std::uint64_t seed);
SimulatedSeries simulate_ou_poisson(Eigen::Index T, double c, double sigma, std::uint64_t seed);
SimulatedSeries simulate_ou_bernoulli(Eigen::Index T, double c, double sigma, std::uint64_t seed);

}  // namespace structvi
