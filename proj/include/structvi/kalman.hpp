#pragma once

// Exact posterior of the linear-Gaussian Wiener model. With prior precision
// Lambda0 (tridiagonal) and likelihood precision tau,
//
//     Lambda = Lambda0 + tau I,   Lambda mu = tau x,
//
// solved in O(T) by tridiagonal elimination. Serves as ground truth for the
// variational fits.

#include <Eigen/Core>

#include "structvi/bidiag.hpp"
#include "structvi/models.hpp"
#include "structvi/variational.hpp"

namespace structvi {

struct WienerPosterior {
  Eigen::VectorXd mean;
  SymTridiagd precision;
};

/// Negative Hessian of the Wiener log-prior.
SymTridiagd prior_precision(double sigma0, double sigma, Eigen::Index T);

/// Masked steps contribute no likelihood precision.
WienerPosterior exact_posterior(double sigma0, double sigma, double tau, const Eigen::VectorXd& x,
                                const ObservationMask& mask = {});
WienerPosterior exact_posterior(const WienerGaussian& m);

/// Upper-bidiagonal B with A = B^T B. Throws NotPositiveDefiniteError.
BidiagUpperd cholesky_factor(const SymTridiagd& A);

Eigen::VectorXd posterior_marginal_variances(const WienerPosterior& p);

/// The posterior written as a member of the variational family. KL to the
/// posterior is zero for this q.
StructuredGaussiand as_variational(const WienerPosterior& p);

/// log p(x) = log N(x; 0, Lambda0^{-1} + tau^{-1} I), evaluated as
/// log p(x, mu) - log p(mu | x) with the determinant from the Cholesky factor.
double log_evidence(const WienerGaussian& m);

/// E_q[log p(x, z)] + H[q] in closed form (no sampling).
double analytic_elbo(const WienerGaussian& m, const StructuredGaussiand& q);

/// KL(q || p) between Gaussians, O(T).
double kl_divergence(const StructuredGaussiand& q, const WienerPosterior& p);

}  // namespace structvi
