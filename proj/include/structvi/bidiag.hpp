#pragma once

// O(T) kernels for the two fixed sparse shapes used throughout the library:
// an upper-bidiagonal factor B (diagonal nu, superdiagonal omega) and a
// symmetric tridiagonal matrix (diagonal, single off-diagonal).
//
// All solves return fresh vectors and accept any Eigen vector expression.

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "structvi/errors.hpp"

namespace structvi {

/// Largest T for which dense materialization is allowed.
inline constexpr Eigen::Index kMaxDenseSize = 4096;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

template <typename Derived>
void require_length(const Eigen::MatrixBase<Derived>& v, Eigen::Index expected,
                    const char* where) {
  if (v.size() != expected) {
    throw ArgumentError(std::string(where) + ": expected length " + std::to_string(expected) +
                        ", got " + std::to_string(v.size()));
  }
}

}  // namespace detail

/// Upper-bidiagonal matrix
///
///     [ nu_1  om_1                ]
///     [       nu_2  om_2          ]
///     [             ...   ...     ]
///     [                   nu_T    ]
///
/// with nu_t > 0. Used as the Cholesky factor of a tridiagonal precision,
/// Lambda = B^T B.
template <typename Scalar>
class BidiagUpper {
 public:
  using Vector = VectorX<Scalar>;

  BidiagUpper(Vector nu, Vector omega) : nu_(std::move(nu)), omega_(std::move(omega)) {
    if (nu_.size() < 1) throw ArgumentError("BidiagUpper: T must be at least 1");
    if (omega_.size() != nu_.size() - 1) {
      throw ArgumentError("BidiagUpper: omega must have length T-1");
    }
    // Written as !(x > 0) so that NaN is rejected as well.
    for (Eigen::Index t = 0; t < nu_.size(); ++t) {
      if (!(nu_[t] > Scalar(0))) {
        throw ArgumentError("BidiagUpper: nu[" + std::to_string(t) + "] must be positive");
      }
    }
  }

  static BidiagUpper identity(Eigen::Index T) {
    return BidiagUpper(Vector::Ones(T), Vector::Zero(T > 0 ? T - 1 : 0));
  }

  Eigen::Index size() const { return nu_.size(); }
  const Vector& nu() const { return nu_; }
  const Vector& omega() const { return omega_; }

 private:
  Vector nu_;
  Vector omega_;
};

/// Symmetric tridiagonal matrix; only one off-diagonal is stored.
template <typename Scalar>
class SymTridiag {
 public:
  using Vector = VectorX<Scalar>;

  SymTridiag(Vector diag, Vector offdiag) : diag_(std::move(diag)), offdiag_(std::move(offdiag)) {
    if (diag_.size() < 1) throw ArgumentError("SymTridiag: T must be at least 1");
    if (offdiag_.size() != diag_.size() - 1) {
      throw ArgumentError("SymTridiag: offdiag must have length T-1");
    }
  }

  Eigen::Index size() const { return diag_.size(); }
  const Vector& diag() const { return diag_; }
  const Vector& offdiag() const { return offdiag_; }

 private:
  Vector diag_;
  Vector offdiag_;
};

using BidiagUpperd = BidiagUpper<double>;
using SymTridiagd = SymTridiag<double>;

/// Solves B y = rhs by back substitution.
template <typename Scalar, typename Derived>
VectorX<Scalar> solve_upper(const BidiagUpper<Scalar>& B, const Eigen::MatrixBase<Derived>& rhs) {
  const Eigen::Index T = B.size();
  detail::require_length(rhs, T, "solve_upper");
  const auto& nu = B.nu();
  const auto& omega = B.omega();
  VectorX<Scalar> y(T);
  y[T - 1] = rhs[T - 1] / nu[T - 1];
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    y[t] = (rhs[t] - omega[t] * y[t + 1]) / nu[t];
  }
  return y;
}

/// Solves B^T y = rhs by forward substitution.
template <typename Scalar, typename Derived>
VectorX<Scalar> solve_lower_transpose(const BidiagUpper<Scalar>& B,
                                      const Eigen::MatrixBase<Derived>& rhs) {
  const Eigen::Index T = B.size();
  detail::require_length(rhs, T, "solve_lower_transpose");
  const auto& nu = B.nu();
  const auto& omega = B.omega();
  VectorX<Scalar> y(T);
  y[0] = rhs[0] / nu[0];
  for (Eigen::Index t = 1; t < T; ++t) {
    y[t] = (rhs[t] - omega[t - 1] * y[t - 1]) / nu[t];
  }
  return y;
}

/// B v.
template <typename Scalar, typename Derived>
VectorX<Scalar> matvec_upper(const BidiagUpper<Scalar>& B, const Eigen::MatrixBase<Derived>& v) {
  const Eigen::Index T = B.size();
  detail::require_length(v, T, "matvec_upper");
  VectorX<Scalar> out = B.nu().cwiseProduct(v);
  out.head(T - 1) += B.omega().cwiseProduct(v.tail(T - 1));
  return out;
}

/// log det B = sum_t log nu_t. Independent of omega.
template <typename Scalar>
Scalar log_det(const BidiagUpper<Scalar>& B) {
  return B.nu().array().log().sum();
}

/// Dense copy of B. Oracle/diagnostic use only; guarded at kMaxDenseSize.
template <typename Scalar>
MatrixX<Scalar> to_dense(const BidiagUpper<Scalar>& B) {
  const Eigen::Index T = B.size();
  if (T > kMaxDenseSize) {
    throw SizeError("to_dense: T = " + std::to_string(T) + " exceeds the dense guard");
  }
  MatrixX<Scalar> D = MatrixX<Scalar>::Zero(T, T);
  D.diagonal() = B.nu();
  if (T > 1) D.template diagonal<1>() = B.omega();
  return D;
}

template <typename Scalar>
MatrixX<Scalar> to_dense(const SymTridiag<Scalar>& A) {
  const Eigen::Index T = A.size();
  if (T > kMaxDenseSize) {
    throw SizeError("to_dense: T = " + std::to_string(T) + " exceeds the dense guard");
  }
  MatrixX<Scalar> D = MatrixX<Scalar>::Zero(T, T);
  D.diagonal() = A.diag();
  if (T > 1) {
    D.template diagonal<1>() = A.offdiag();
    D.template diagonal<-1>() = A.offdiag();
  }
  return D;
}

/// A v for symmetric tridiagonal A.
template <typename Scalar, typename Derived>
VectorX<Scalar> matvec(const SymTridiag<Scalar>& A, const Eigen::MatrixBase<Derived>& v) {
  const Eigen::Index T = A.size();
  detail::require_length(v, T, "matvec");
  VectorX<Scalar> out = A.diag().cwiseProduct(v);
  out.head(T - 1) += A.offdiag().cwiseProduct(v.tail(T - 1));
  out.tail(T - 1) += A.offdiag().cwiseProduct(v.head(T - 1));
  return out;
}

/// Solves A y = rhs for symmetric positive definite tridiagonal A by Thomas
/// elimination. Throws NotPositiveDefiniteError on a non-positive pivot.
template <typename Scalar, typename Derived>
VectorX<Scalar> tridiag_solve(const SymTridiag<Scalar>& A, const Eigen::MatrixBase<Derived>& rhs) {
  const Eigen::Index T = A.size();
  detail::require_length(rhs, T, "tridiag_solve");
  const auto& d = A.diag();
  const auto& e = A.offdiag();

  VectorX<Scalar> c(T);  // normalized superdiagonal after elimination
  VectorX<Scalar> y(T);
  Scalar pivot = d[0];
  for (Eigen::Index t = 0; t < T; ++t) {
    if (t > 0) pivot = d[t] - e[t - 1] * c[t - 1];
    if (!(pivot > Scalar(0))) {
      throw NotPositiveDefiniteError(
          "tridiag_solve: non-positive pivot at index " + std::to_string(t),
          static_cast<std::size_t>(t));
    }
    c[t] = t + 1 < T ? e[t] / pivot : Scalar(0);
    y[t] = (t > 0 ? rhs[t] - e[t - 1] * y[t - 1] : Scalar(rhs[t])) / pivot;
  }
  for (Eigen::Index t = T - 2; t >= 0; --t) y[t] -= c[t] * y[t + 1];
  return y;
}

}  // namespace structvi
