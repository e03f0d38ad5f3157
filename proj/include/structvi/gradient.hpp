#pragma once

// Reparameterization-gradient estimators of the ELBO
//
//     L(mu, nu, omega) = E_eps[ log p(x, mu + B^{-1} eps) ] + H[q].
//
// estimate_gradient is the O(S T) forward/backward estimator.
// estimate_gradient_dense is a deliberately naive O(S T^2) reference that
// materializes B^{-1}; it exists to cross-check the fast path.

#include <cmath>

#include <Eigen/Core>

#include "structvi/models.hpp"
#include "structvi/variational.hpp"

namespace structvi {

/// Full ELBO gradient (entropy term included) and the ELBO estimate, both
/// computed from the same batch.
struct GradEstimate {
  Eigen::VectorXd g_mu;
  Eigen::VectorXd g_nu;
  Eigen::VectorXd g_omega;
  double elbo_estimate = 0.0;
  long long samples = 0;

  bool all_finite() const {
    return g_mu.allFinite() && g_nu.allFinite() && g_omega.allFinite() &&
           std::isfinite(elbo_estimate);
  }
};

/// Samples per step used when reporting a final ELBO.
inline constexpr long long kDefaultEvalSamples = 64;

/// (1/S) sum_s log p(x, z_s) + H[q].
double estimate_elbo(const TimeSeriesModel& m, const StructuredGaussiand& q,
                     const SampleBatch<double>& batch);

/// For each sample: gamma_s = d log p / dz at z_s, y_s = z_s - mu and
/// B^T y'_s = gamma_s (forward substitution). Then
///
///   g_mu    = mean_s gamma_s
///   g_nu_t  = -mean_s y'_{s,t} y_{s,t} - 1/nu_t
///   g_om_t  = -mean_s y'_{s,t} y_{s,t+1}
///
/// Samples may be processed concurrently; the reduction order is fixed.
GradEstimate estimate_gradient(const TimeSeriesModel& m, const StructuredGaussiand& q,
                               const SampleBatch<double>& batch);

/// Same quantity via an explicit dense B^{-1} and
/// d B^{-1} / d lambda_i = -B^{-1} (dB/d lambda_i) B^{-1}, one parameter at a time.
/// Throws SizeError above kMaxDenseSize.
GradEstimate estimate_gradient_dense(const TimeSeriesModel& m, const StructuredGaussiand& q,
                                     const SampleBatch<double>& batch);

}  // namespace structvi
