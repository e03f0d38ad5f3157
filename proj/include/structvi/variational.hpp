#pragma once

// Gaussian variational family with tridiagonal precision,
//
//     q(z) = N(z; mu, (B^T B)^{-1}),   B = BidiagUpper(nu, omega),
//
// sampled through z = mu + B^{-1} eps with eps ~ N(0, I). Every operation is
// O(T); the covariance (dense in general) is never formed.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "structvi/bidiag.hpp"
#include "structvi/errors.hpp"
#include "structvi/parallel.hpp"
#include "structvi/rng.hpp"

namespace structvi {

template <typename Scalar>
class StructuredGaussian {
 public:
  using Vector = VectorX<Scalar>;

  StructuredGaussian(Vector mu, BidiagUpper<Scalar> factor)
      : mu_(std::move(mu)), factor_(std::move(factor)) {
    if (mu_.size() != factor_.size()) {
      throw ArgumentError("StructuredGaussian: mu and factor disagree on T");
    }
  }

  StructuredGaussian(Vector mu, Vector nu, Vector omega)
      : StructuredGaussian(std::move(mu), BidiagUpper<Scalar>(std::move(nu), std::move(omega))) {}

  Eigen::Index size() const { return mu_.size(); }
  const Vector& mu() const { return mu_; }
  const BidiagUpper<Scalar>& factor() const { return factor_; }
  const Vector& nu() const { return factor_.nu(); }
  const Vector& omega() const { return factor_.omega(); }

 private:
  Vector mu_;
  BidiagUpper<Scalar> factor_;
};

using StructuredGaussiand = StructuredGaussian<double>;

/// Standard-normal noise for one sample, tagged with the key of the
/// substream it was drawn from.
template <typename Scalar>
struct NoiseDraw {
  VectorX<Scalar> eps;
  std::uint64_t stream_id = 0;
};

/// One reparameterized sample. The noise is kept so that gradient
/// estimators can reuse it.
template <typename Scalar>
struct Sample {
  NoiseDraw<Scalar> noise;
  VectorX<Scalar> z;
};

template <typename Scalar>
using SampleBatch = std::vector<Sample<Scalar>>;

/// Mean-field member of the family (omega = 0).
template <typename Scalar, typename MuDerived, typename NuDerived>
StructuredGaussian<Scalar> mean_field(const Eigen::MatrixBase<MuDerived>& mu,
                                      const Eigen::MatrixBase<NuDerived>& nu) {
  if (mu.size() != nu.size()) throw ArgumentError("mean_field: mu and nu lengths differ");
  const Eigen::Index T = nu.size();
  return StructuredGaussian<Scalar>(mu, nu, VectorX<Scalar>::Zero(T > 0 ? T - 1 : 0));
}

inline StructuredGaussiand mean_field(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  return mean_field<double>(mu, nu);
}

/// z = mu + B^{-1} eps.
template <typename Scalar, typename Derived>
VectorX<Scalar> reparameterize(const StructuredGaussian<Scalar>& q,
                               const Eigen::MatrixBase<Derived>& eps) {
  detail::require_length(eps, q.size(), "reparameterize");
  return q.mu() + solve_upper(q.factor(), eps);
}

template <typename Scalar>
VectorX<Scalar> reparameterize(const StructuredGaussian<Scalar>& q, const NoiseDraw<Scalar>& draw) {
  return reparameterize(q, draw.eps);
}

/// Exact differential entropy, (T/2) log(2 pi e) - sum_t log nu_t.
template <typename Scalar>
Scalar entropy(const StructuredGaussian<Scalar>& q) {
  const Scalar per_dim = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar> *
                                                std::numbers::e_v<Scalar>);
  return Scalar(q.size()) * per_dim - log_det(q.factor());
}

template <typename Scalar, typename Derived>
Scalar log_density(const StructuredGaussian<Scalar>& q, const Eigen::MatrixBase<Derived>& z) {
  detail::require_length(z, q.size(), "log_density");
  const VectorX<Scalar> whitened = matvec_upper(q.factor(), z - q.mu());
  return -Scalar(0.5) * Scalar(q.size()) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
         log_det(q.factor()) - Scalar(0.5) * whitened.squaredNorm();
}

/// diag((B^T B)^{-1}) by the backward recursion
///   v_T = 1/nu_T^2,  v_t = 1/nu_t^2 + (omega_t/nu_t)^2 v_{t+1}.
template <typename Scalar>
VectorX<Scalar> marginal_variances(const BidiagUpper<Scalar>& B) {
  const Eigen::Index T = B.size();
  const auto& nu = B.nu();
  const auto& omega = B.omega();
  VectorX<Scalar> var(T);
  var[T - 1] = Scalar(1) / (nu[T - 1] * nu[T - 1]);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Scalar ratio = omega[t] / nu[t];
    var[t] = Scalar(1) / (nu[t] * nu[t]) + ratio * ratio * var[t + 1];
  }
  return var;
}

template <typename Scalar>
VectorX<Scalar> marginal_variances(const StructuredGaussian<Scalar>& q) {
  return marginal_variances(q.factor());
}

/// Lag-one covariances Cov(z_t, z_{t+1}) = -(omega_t/nu_t) Var(z_{t+1}),
/// i.e. the first off-diagonal of (B^T B)^{-1}.
template <typename Scalar>
VectorX<Scalar> lag_one_covariances(const StructuredGaussian<Scalar>& q) {
  const Eigen::Index T = q.size();
  const VectorX<Scalar> var = marginal_variances(q);
  return -(q.omega().array() / q.nu().head(T - 1).array() * var.tail(T - 1).array()).matrix();
}

/// T standard-normal variates from substream (seed, step, sample).
template <typename Scalar = double>
NoiseDraw<Scalar> draw_noise(Eigen::Index T, std::uint64_t seed, std::uint64_t step,
                             std::uint64_t sample) {
  CounterStream stream(seed, step, sample);
  std::normal_distribution<Scalar> normal;
  NoiseDraw<Scalar> draw{VectorX<Scalar>(T), stream.key()};
  for (Eigen::Index t = 0; t < T; ++t) draw.eps[t] = normal(stream);
  return draw;
}

/// S reparameterized samples. Sample s of step `step` uses substream
/// (seed, step, s), so the result does not depend on evaluation order.
template <typename Scalar>
SampleBatch<Scalar> sample_batch(const StructuredGaussian<Scalar>& q, std::uint64_t seed,
                                 long long S, std::uint64_t step = 0) {
  if (S < 1) throw ArgumentError("sample_batch: S must be at least 1");
  SampleBatch<Scalar> batch(static_cast<std::size_t>(S));
  auto draw_one = [&](std::size_t s) {
    batch[s].noise = draw_noise<Scalar>(q.size(), seed, step, s);
    batch[s].z = reparameterize(q, batch[s].noise);
  };
  if (S == 1) {
    draw_one(0);
  } else {
    parallel_for(batch.size(), draw_one);
  }
  return batch;
}

}  // namespace structvi
