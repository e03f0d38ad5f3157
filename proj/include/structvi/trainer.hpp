#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "structvi/gradient.hpp"
#include "structvi/models.hpp"
#include "structvi/variational.hpp"

namespace structvi {

enum class Optimizer { sgd, adam };
enum class Variant { structured, mean_field };

std::string to_string(Optimizer o);
std::string to_string(Variant v);
Optimizer parse_optimizer(const std::string& name);
Variant parse_variant(const std::string& name);

struct FitConfig {
  long long max_steps = 20000;
  long long samples = 1;  // S per gradient step
  double learning_rate = 0.05;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double delta = 1e-8;
  /// Step size at step k is learning_rate / (1 + k / decay_steps) for Adam;
  /// 0 keeps it constant. SGD always uses learning_rate / sqrt(k).
  double decay_steps = 200;
  std::uint64_t seed = 0;
  /// Starting point; when empty, mu = 0, nu_t = 1 / prior_marginal_std(t), omega = 0.
  std::optional<StructuredGaussiand> init;
  long long convergence_window = 500;
  double convergence_tol = 1e-5;
  long long eval_samples = kDefaultEvalSamples;

  /// Throws ArgumentError on an invalid combination.
  void validate() const;
};

struct TracePoint {
  long long step;
  double elbo_smoothed;
  double elbo_raw;
  double seconds;  // cumulative wall clock
};

struct FitReport {
  StructuredGaussiand final_params;
  std::vector<TracePoint> elbo_trace;
  long long steps_run = 0;
  double wall_clock_per_step = 0.0;
  std::uint64_t seed = 0;
  bool converged = false;
  Variant variant = Variant::structured;
  /// eval_samples-sample ELBO of final_params and its Monte Carlo standard error.
  double final_elbo = 0.0;
  double final_elbo_stderr = 0.0;
};

/// Non-finite gradient or ELBO during fitting.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(long long step, Eigen::VectorXd mu, Eigen::VectorXd nu, Eigen::VectorXd omega);

  long long step() const { return step_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::VectorXd& nu() const { return nu_; }
  const Eigen::VectorXd& omega() const { return omega_; }

 private:
  long long step_;
  Eigen::VectorXd mu_, nu_, omega_;
};

/// Maximizes the ELBO over (mu, log nu, omega) by stochastic gradient ascent.
FitReport fit(const TimeSeriesModel& m, const FitConfig& cfg);

/// Same loop with omega pinned at zero.
FitReport fit_mean_field(const TimeSeriesModel& m, const FitConfig& cfg);

FitReport fit(const TimeSeriesModel& m, const FitConfig& cfg, Variant variant);

/// ELBO of q from `samples` fresh draws; returns (estimate, standard error).
std::pair<double, double> evaluate_elbo(const TimeSeriesModel& m, const StructuredGaussiand& q,
                                        std::uint64_t seed, long long samples);

struct MultiFitReport {
  std::vector<FitReport> chains;
};

/// Independent fits, one per model, chain i seeded from (cfg.seed, i). Chains
/// run in parallel.
MultiFitReport fit_chains(const std::vector<ModelPtr>& models, const FitConfig& cfg,
                          Variant variant = Variant::structured);

std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain_index);

struct BenchmarkRow {
  Eigen::Index T;
  std::string variant;  // "linear" or "dense"
  double median_seconds_per_step;
};

struct BenchmarkOptions {
  int repetitions = 20;
  bool include_dense = true;
  Eigen::Index dense_max_T = kMaxDenseSize;
  bool include_linear = true;
};

using ModelFamily = std::function<ModelPtr(Eigen::Index T)>;

/// Median wall clock of one gradient estimate (batch pre-drawn, warm-up
/// excluded) for each T, for the O(T) path and, up to dense_max_T, the dense path.
std::vector<BenchmarkRow> benchmark_scaling(const ModelFamily& family,
                                            const std::vector<Eigen::Index>& Ts,
                                            const FitConfig& cfg,
                                            const BenchmarkOptions& options = {});

/// Least-squares slope of log(seconds) against log(T) over the rows of one variant.
double loglog_slope(const std::vector<BenchmarkRow>& rows, const std::string& variant);

}  // namespace structvi
