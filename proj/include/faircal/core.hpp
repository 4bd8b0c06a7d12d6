#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace faircal {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using IntVector = VectorX<int>;

// Read-only views accept any dense expression without a copy when layouts agree.
using VectorCRef = Eigen::Ref<const Vector>;
using IntVectorCRef = Eigen::Ref<const IntVector>;
using MatrixCRef = Eigen::Ref<const Matrix>;

using Rng = std::mt19937_64;

/// Clip applied before every logit transform and by score-updating post-processors.
inline constexpr double kScoreEpsilon = 1e-6;

/// Invalid arguments or broken preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage read the group column outside its availability regime (CLI exit code 3).
class RegimeViolation : public Error {
 public:
  using Error::Error;
};

/// A numerical component failed (non-convergence, NaN loss, ...).
class ComponentError : public Error {
 public:
  using Error::Error;
};

template <std::floating_point Scalar>
inline Scalar sigmoid(Scalar z) {
  if (z >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-z));
  }
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <std::floating_point Scalar>
inline Scalar clip_score(Scalar s, Scalar eps = Scalar(kScoreEpsilon)) {
  return std::min(std::max(s, eps), Scalar(1) - eps);
}

template <std::floating_point Scalar>
inline Scalar logit(Scalar s) {
  const Scalar c = clip_score(s);
  return std::log(c / (Scalar(1) - c));
}

template <typename Derived>
inline Vector sigmoid(const Eigen::MatrixBase<Derived>& z) {
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

template <typename Derived>
inline Vector logit(const Eigen::MatrixBase<Derived>& s) {
  return s.unaryExpr([](double v) { return logit(v); });
}

/// Rows of `m` selected by `rows`, in order.
Matrix take_rows(const MatrixCRef& m, const std::vector<Index>& rows);
Vector take(const VectorCRef& v, const std::vector<Index>& rows);
IntVector take(const IntVectorCRef& v, const std::vector<Index>& rows);

/// Seeded uniform permutation of 0..n-1.
std::vector<Index> permutation(Index n, Rng& rng);

/// Child seed for an independent stream, e.g. one per (trial, method).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace faircal
