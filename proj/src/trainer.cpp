#include "structvi/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "structvi/errors.hpp"
#include "structvi/parallel.hpp"
#include "structvi/rng.hpp"

namespace structvi {
namespace {

using Clock = std::chrono::steady_clock;

// Substream step keys outside the range of optimizer steps.
constexpr std::uint64_t kEvalStep = 0xffffffffffff0002ULL;
constexpr std::uint64_t kChainStep = 0xffffffffffff0003ULL;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Unconstrained parameter vector theta = [mu; log nu; omega], length 3T - 1.
struct Unconstrained {
  Eigen::Index T;
  Eigen::VectorXd theta;

  explicit Unconstrained(const StructuredGaussiand& q) : T(q.size()), theta(3 * q.size() - 1) {
    theta << q.mu(), q.nu().array().log().matrix(), q.omega();
  }

  auto mu() const { return theta.segment(0, T); }
  auto rho() const { return theta.segment(T, T); }
  auto omega() const { return theta.segment(2 * T, T - 1); }

  Eigen::VectorXd nu() const { return rho().array().exp().matrix(); }

  StructuredGaussiand to_gaussian() const { return StructuredGaussiand(mu(), nu(), omega()); }

  // Chain rule through nu = exp(rho): g_rho = nu * g_nu.
  Eigen::VectorXd gradient(const GradEstimate& g, const Eigen::VectorXd& nu, bool pin_omega) const {
    Eigen::VectorXd out(theta.size());
    out << g.g_mu, nu.cwiseProduct(g.g_nu), g.g_omega;
    if (pin_omega) out.segment(2 * T, T - 1).setZero();
    return out;
  }
};

StructuredGaussiand default_init(const TimeSeriesModel& m) {
  const Eigen::Index T = m.size();
  Eigen::VectorXd nu(T);
  for (Eigen::Index t = 0; t < T; ++t) nu[t] = 1.0 / m.prior_marginal_std(t);
  return mean_field(Eigen::VectorXd::Zero(T), nu);
}

class AscentStep {
 public:
  AscentStep(const FitConfig& cfg, Eigen::Index size)
      : cfg_(cfg), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

  void apply(Eigen::VectorXd& theta, const Eigen::VectorXd& g, long long step) {
    const double k = static_cast<double>(step);
    if (cfg_.optimizer == Optimizer::sgd) {
      theta += (cfg_.learning_rate / std::sqrt(k)) * g;
      return;
    }
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseAbs2();
    const double m_scale = 1.0 / (1.0 - std::pow(cfg_.beta1, k));
    const double v_scale = 1.0 / (1.0 - std::pow(cfg_.beta2, k));
    const double rate =
        cfg_.decay_steps > 0 ? cfg_.learning_rate / (1.0 + k / cfg_.decay_steps) : cfg_.learning_rate;
    theta.array() += rate * (m_.array() * m_scale) /
                     ((v_.array() * v_scale).sqrt() + cfg_.delta);
  }

 private:
  const FitConfig& cfg_;
  Eigen::VectorXd m_, v_;
};

}  // namespace

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }
std::string to_string(Variant v) { return v == Variant::structured ? "structured" : "mean_field"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ArgumentError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

Variant parse_variant(const std::string& name) {
  if (name == "structured") return Variant::structured;
  if (name == "mean_field") return Variant::mean_field;
  throw ArgumentError("unknown variant '" + name + "' (expected structured or mean_field)");
}

void FitConfig::validate() const {
  if (max_steps < 1) throw ArgumentError("FitConfig: max_steps must be at least 1");
  if (samples < 1) throw ArgumentError("FitConfig: samples must be at least 1");
  if (eval_samples < 1) throw ArgumentError("FitConfig: eval_samples must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ArgumentError("FitConfig: learning_rate must be positive");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ArgumentError("FitConfig: Adam decay rates must lie in [0, 1)");
  }
  if (!(decay_steps >= 0)) throw ArgumentError("FitConfig: decay_steps must be non-negative");
  if (!(delta > 0)) throw ArgumentError("FitConfig: delta must be positive");
  if (convergence_window < 1) throw ArgumentError("FitConfig: convergence_window must be at least 1");
  if (!(convergence_tol >= 0)) throw ArgumentError("FitConfig: convergence_tol must be non-negative");
}

DivergedError::DivergedError(long long step, Eigen::VectorXd mu, Eigen::VectorXd nu,
                             Eigen::VectorXd omega)
    : std::runtime_error("fit diverged at step " + std::to_string(step)),
      step_(step),
      mu_(std::move(mu)),
      nu_(std::move(nu)),
      omega_(std::move(omega)) {}

std::pair<double, double> evaluate_elbo(const TimeSeriesModel& m, const StructuredGaussiand& q,
                                        std::uint64_t seed, long long samples) {
  const SampleBatch<double> batch = sample_batch(q, seed, samples, kEvalStep);
  Eigen::VectorXd values(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t s = 0; s < batch.size(); ++s) {
    values[s] = log_joint(m, batch[s].z) - log_density(q, batch[s].z);
  }
  const double mean = values.mean();
  double stderr_ = 0.0;
  if (values.size() > 1) {
    const double var = (values.array() - mean).square().sum() / static_cast<double>(values.size() - 1);
    stderr_ = std::sqrt(var / static_cast<double>(values.size()));
  }
  return {mean, stderr_};
}

FitReport fit(const TimeSeriesModel& m, const FitConfig& cfg, Variant variant) {
  cfg.validate();
  const bool pin_omega = variant == Variant::mean_field;
  StructuredGaussiand start = cfg.init ? *cfg.init : default_init(m);
  if (start.size() != m.size()) throw ArgumentError("fit: initial q and model disagree on T");
  if (pin_omega) start = mean_field(start.mu(), start.nu());

  Unconstrained params(start);
  AscentStep ascent(cfg, params.theta.size());
  const double smoothing = 2.0 / (static_cast<double>(cfg.convergence_window) + 1.0);

  FitReport report{start, {}, 0, 0.0, cfg.seed, false, variant, 0.0, 0.0};
  report.elbo_trace.reserve(static_cast<std::size_t>(cfg.max_steps));
  std::vector<double> smoothed_history;
  smoothed_history.reserve(static_cast<std::size_t>(cfg.max_steps));

  const auto start_time = Clock::now();
  double smoothed = 0.0;
  for (long long step = 1; step <= cfg.max_steps; ++step) {
    const Eigen::VectorXd nu = params.nu();
    if (!nu.allFinite() || !params.theta.allFinite() || !(nu.array() > 0).all()) {
      throw DivergedError(step, params.mu(), nu, params.omega());
    }
    const StructuredGaussiand q(params.mu(), nu, params.omega());
    const SampleBatch<double> batch =
        sample_batch(q, cfg.seed, cfg.samples, static_cast<std::uint64_t>(step));
    const GradEstimate g = estimate_gradient(m, q, batch);
    if (!g.all_finite()) throw DivergedError(step, params.mu(), nu, params.omega());

    ascent.apply(params.theta, params.gradient(g, nu, pin_omega), step);

    smoothed = step == 1 ? g.elbo_estimate : smoothed + smoothing * (g.elbo_estimate - smoothed);
    smoothed_history.push_back(smoothed);
    report.elbo_trace.push_back({step, smoothed, g.elbo_estimate, seconds_since(start_time)});
    report.steps_run = step;

    // Compare the smoothed ELBO across one window, at window boundaries only.
    const long long w = cfg.convergence_window;
    if (cfg.convergence_tol > 0 && step % w == 0 && step >= 2 * w) {
      const double previous = smoothed_history[static_cast<std::size_t>(step - w - 1)];
      const double scale = std::max(std::abs(smoothed), 1e-300);
      if (std::abs(smoothed - previous) / scale < cfg.convergence_tol) {
        report.converged = true;
        break;
      }
    }
  }

  if (!params.theta.allFinite()) {
    throw DivergedError(report.steps_run, params.mu(), params.nu(), params.omega());
  }
  report.final_params = params.to_gaussian();
  report.wall_clock_per_step = seconds_since(start_time) / static_cast<double>(report.steps_run);
  std::tie(report.final_elbo, report.final_elbo_stderr) =
      evaluate_elbo(m, report.final_params, cfg.seed, cfg.eval_samples);
  if (!std::isfinite(report.final_elbo)) {
    throw DivergedError(report.steps_run, report.final_params.mu(), report.final_params.nu(),
                        report.final_params.omega());
  }
  return report;
}

FitReport fit(const TimeSeriesModel& m, const FitConfig& cfg) {
  return fit(m, cfg, Variant::structured);
}

FitReport fit_mean_field(const TimeSeriesModel& m, const FitConfig& cfg) {
  return fit(m, cfg, Variant::mean_field);
}

std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain_index) {
  return substream_key(seed, kChainStep, chain_index);
}

MultiFitReport fit_chains(const std::vector<ModelPtr>& models, const FitConfig& cfg,
                          Variant variant) {
  std::vector<std::optional<FitReport>> results(models.size());
  parallel_for(models.size(), [&](std::size_t i) {
    FitConfig chain_cfg = cfg;
    chain_cfg.seed = chain_seed(cfg.seed, i);
    results[i] = fit(*models[i], chain_cfg, variant);
  });
  MultiFitReport out;
  out.chains.reserve(models.size());
  for (auto& r : results) out.chains.push_back(std::move(*r));
  return out;
}

namespace {

template <typename Fn>
double median_seconds(Fn&& call, int repetitions) {
  // Warm-up, which also sizes the inner loop so one measurement spans ~1 ms.
  auto t0 = Clock::now();
  call();
  const double once = std::max(seconds_since(t0), 1e-9);
  const int inner = static_cast<int>(std::clamp(1e-3 / once, 1.0, 1e5));

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    t0 = Clock::now();
    for (int i = 0; i < inner; ++i) call();
    samples.push_back(seconds_since(t0) / inner);
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

std::vector<BenchmarkRow> benchmark_scaling(const ModelFamily& family,
                                            const std::vector<Eigen::Index>& Ts,
                                            const FitConfig& cfg,
                                            const BenchmarkOptions& options) {
  if (!std::is_sorted(Ts.begin(), Ts.end())) {
    throw ArgumentError("benchmark_scaling: T values must be sorted ascending");
  }
  if (options.repetitions < 1) throw ArgumentError("benchmark_scaling: repetitions must be >= 1");
  std::vector<BenchmarkRow> rows;
  for (const Eigen::Index T : Ts) {
    const ModelPtr model = family(T);
    const StructuredGaussiand q = cfg.init && cfg.init->size() == T ? *cfg.init : default_init(*model);
    const SampleBatch<double> batch = sample_batch(q, cfg.seed, cfg.samples);
    if (options.include_linear) {
      const double s = median_seconds([&] { (void)estimate_gradient(*model, q, batch); },
                                      options.repetitions);
      rows.push_back({T, "linear", s});
    }
    if (options.include_dense && T <= options.dense_max_T && T <= kMaxDenseSize) {
      const double s = median_seconds([&] { (void)estimate_gradient_dense(*model, q, batch); },
                                      options.repetitions);
      rows.push_back({T, "dense", s});
    }
  }
  return rows;
}

double loglog_slope(const std::vector<BenchmarkRow>& rows, const std::string& variant) {
  std::vector<double> xs, ys;
  for (const auto& row : rows) {
    if (row.variant != variant) continue;
    xs.push_back(std::log(static_cast<double>(row.T)));
    ys.push_back(std::log(row.median_seconds_per_step));
  }
  if (xs.size() < 2) throw ArgumentError("loglog_slope: need at least two rows for " + variant);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace structvi
