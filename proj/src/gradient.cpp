#include "structvi/gradient.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "structvi/errors.hpp"
#include "structvi/parallel.hpp"

namespace structvi {
namespace {

// Samples handled by one task. Fixed so that the summation order, and hence
// the result, is independent of the number of worker threads.
constexpr std::size_t kSamplesPerChunk = 8;

void check_batch(const TimeSeriesModel& m, const StructuredGaussiand& q,
                 const SampleBatch<double>& batch, const char* where) {
  if (m.size() != q.size()) {
    throw ArgumentError(std::string(where) + ": model has T = " + std::to_string(m.size()) +
                        " but q has T = " + std::to_string(q.size()));
  }
  if (batch.empty()) throw ArgumentError(std::string(where) + ": empty batch");
  for (const auto& sample : batch) {
    if (sample.z.size() != q.size()) {
      throw ArgumentError(std::string(where) + ": sample length does not match T");
    }
    if (sample.noise.eps.size() != q.size()) {
      throw ContractError(std::string(where) + ": batch does not retain its noise draws");
    }
  }
}

struct Partial {
  Eigen::VectorXd g_mu, yy, yy_next;
  double log_joint = 0.0;

  explicit Partial(Eigen::Index T)
      : g_mu(Eigen::VectorXd::Zero(T)),
        yy(Eigen::VectorXd::Zero(T)),
        yy_next(Eigen::VectorXd::Zero(T - 1)) {}

  void add(const Partial& other) {
    g_mu += other.g_mu;
    yy += other.yy;
    yy_next += other.yy_next;
    log_joint += other.log_joint;
  }
};

GradEstimate finish(const StructuredGaussiand& q, const Partial& sum, std::size_t S) {
  const double inv_s = 1.0 / static_cast<double>(S);
  GradEstimate out;
  out.g_mu = sum.g_mu * inv_s;
  out.g_nu = -sum.yy * inv_s - q.nu().cwiseInverse();
  out.g_omega = -sum.yy_next * inv_s;
  out.elbo_estimate = sum.log_joint * inv_s + entropy(q);
  out.samples = static_cast<long long>(S);
  return out;
}

}  // namespace

double estimate_elbo(const TimeSeriesModel& m, const StructuredGaussiand& q,
                     const SampleBatch<double>& batch) {
  if (m.size() != q.size()) throw ArgumentError("estimate_elbo: model and q disagree on T");
  if (batch.empty()) throw ArgumentError("estimate_elbo: empty batch");
  double sum = 0.0;
  for (const auto& sample : batch) sum += log_joint(m, sample.z);
  return sum / static_cast<double>(batch.size()) + entropy(q);
}

GradEstimate estimate_gradient(const TimeSeriesModel& m, const StructuredGaussiand& q,
                               const SampleBatch<double>& batch) {
  check_batch(m, q, batch, "estimate_gradient");
  const Eigen::Index T = q.size();
  const std::size_t S = batch.size();
  const std::size_t chunks = (S + kSamplesPerChunk - 1) / kSamplesPerChunk;

  std::vector<Partial> partials(chunks, Partial(T));
  auto run_chunk = [&](std::size_t c) {
    Partial& acc = partials[c];
    const std::size_t end = std::min(S, (c + 1) * kSamplesPerChunk);
    for (std::size_t s = c * kSamplesPerChunk; s < end; ++s) {
      const Eigen::VectorXd& z = batch[s].z;
      const Eigen::VectorXd y = z - q.mu();  // = B^{-1} eps
      const Eigen::VectorXd g = gamma(m, z);
      const Eigen::VectorXd y_adj = solve_lower_transpose(q.factor(), g);
      acc.g_mu += g;
      acc.yy += y_adj.cwiseProduct(y);
      acc.yy_next += y_adj.head(T - 1).cwiseProduct(y.tail(T - 1));
      acc.log_joint += log_joint(m, z);
    }
  };
  if (chunks == 1) {
    run_chunk(0);
  } else {
    parallel_for(chunks, run_chunk);
  }

  for (std::size_t c = 1; c < chunks; ++c) partials[0].add(partials[c]);
  return finish(q, partials[0], S);
}

GradEstimate estimate_gradient_dense(const TimeSeriesModel& m, const StructuredGaussiand& q,
                                     const SampleBatch<double>& batch) {
  check_batch(m, q, batch, "estimate_gradient_dense");
  const Eigen::Index T = q.size();
  const Eigen::MatrixXd B = to_dense(q.factor());
  const Eigen::MatrixXd B_inv =
      B.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(T, T));

  Partial sum(T);
  Eigen::VectorXd df(T);
  for (const auto& sample : batch) {
    const Eigen::VectorXd y = B_inv * sample.noise.eps;
    const Eigen::VectorXd z = q.mu() + y;
    const Eigen::VectorXd g = gamma(m, z);

    // d f / d mu_t = e_t.
    sum.g_mu += g;
    for (Eigen::Index t = 0; t < T; ++t) {
      // d B / d nu_t = e_t e_t^T, so d f / d nu_t = -B^{-1} e_t y_t.
      df.noalias() = -B_inv.col(t) * y[t];
      sum.yy[t] -= g.dot(df);  // accumulates +y'_t y_t; finish() negates
      if (t + 1 < T) {
        // d B / d omega_t = e_t e_{t+1}^T, so d f / d omega_t = -B^{-1} e_t y_{t+1}.
        df.noalias() = -B_inv.col(t) * y[t + 1];
        sum.yy_next[t] -= g.dot(df);
      }
    }
    sum.log_joint += log_joint(m, z);
  }

  GradEstimate out = finish(q, sum, batch.size());
  // Entropy from the dense diagonal rather than through entropy(q).
  const double half_log_2pi_e = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  out.elbo_estimate = sum.log_joint / static_cast<double>(batch.size()) +
                      static_cast<double>(T) * half_log_2pi_e -
                      B.diagonal().array().abs().log().sum();
  return out;
}

}  // namespace structvi
