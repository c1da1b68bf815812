#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

namespace crbm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Vector parameter that takes its scalar from another argument.
template <typename Scalar>
using VectorArg = std::type_identity_t<Vector<Scalar>>;

/// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared where the algorithm requires finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, datasets, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact computation refused because the model is too large to enumerate.
class ModelTooLarge : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

/// log(1 + exp(u)) without overflow.
template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
inline Scalar softplus(Scalar u) {
  using std::abs;
  using std::exp;
  using std::log1p;
  return std::max(u, Scalar(0)) + log1p(exp(-abs(u)));
}

/// 1 / (1 + exp(-u)), branching on the sign of u so exp never overflows.
template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
inline Scalar logistic(Scalar u) {
  using std::exp;
  if (u >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-u));
  const Scalar e = exp(u);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto logistic(const Eigen::ArrayBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  return u.unaryExpr([](Scalar t) { return crbm::logistic(t); });
}

template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  return u.unaryExpr([](Scalar t) { return crbm::softplus(t); });
}

/// True when every entry is exactly 0 or 1.
template <typename Derived>
bool is_binary(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar t) { return t == Scalar(0) || t == Scalar(1); }).all();
}

template <typename Derived>
void require_binary(const Eigen::MatrixBase<Derived>& x, const char* name) {
  if (!is_binary(x)) throw std::invalid_argument(std::string(name) + " must contain only 0/1 entries");
}

/// Elementwise threshold at one half; ties resolve to 1.
template <typename Derived>
Vector<typename Derived::Scalar> threshold_half(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  return p.unaryExpr([](Scalar t) { return t >= Scalar(0.5) ? Scalar(1) : Scalar(0); });
}

}  // namespace crbm
