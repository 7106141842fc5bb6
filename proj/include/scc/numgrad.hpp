#pragma once

// Dense kernels shared by every attack and defense: normalization, cosine
// geometry, l-infinity projection, tempered softmax and a central-difference
// gradient used as a test oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "scc/errors.hpp"

namespace scc {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Row-major so that `Eigen::Map` over the storage is the flattened pixel vector.
template <typename Scalar>
using ImageX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Image = ImageX<double>;

inline constexpr double kNormFloor = 1e-12;

template <typename Scalar>
Eigen::Map<const VectorX<Scalar>> flatten(const ImageX<Scalar>& image) {
  return {image.data(), image.size()};
}

template <typename Scalar>
Eigen::Map<VectorX<Scalar>> flatten(ImageX<Scalar>& image) {
  return {image.data(), image.size()};
}

/// Temporaries are copied out; a view into them would dangle.
template <typename Scalar>
VectorX<Scalar> flatten(ImageX<Scalar>&& image) {
  return Eigen::Map<const VectorX<Scalar>>(image.data(), image.size());
}

template <typename Scalar>
ImageX<Scalar> unflatten(const VectorX<Scalar>& flat, Eigen::Index rows, Eigen::Index cols) {
  if (flat.size() != rows * cols) {
    throw ShapeMismatchError("flat vector does not match image shape");
  }
  return Eigen::Map<const ImageX<Scalar>>(flat.data(), rows, cols);
}

/// A vector with unit l2 norm; only constructible through `l2_normalize`.
template <typename Scalar>
class UnitEmbedding {
 public:
  const VectorX<Scalar>& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  Scalar operator[](Eigen::Index i) const { return values_[i]; }

  template <typename Derived>
  friend UnitEmbedding<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v);

 private:
  explicit UnitEmbedding(VectorX<Scalar> values) : values_(std::move(values)) {}

  VectorX<Scalar> values_;
};

template <typename Derived>
UnitEmbedding<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = v.norm();
  if (!(norm > Scalar(kNormFloor))) throw ZeroNormError();
  return UnitEmbedding<Scalar>(VectorX<Scalar>(v / norm));
}

template <typename Scalar>
Scalar cosine(const UnitEmbedding<Scalar>& u, const UnitEmbedding<Scalar>& v) {
  if (u.size() != v.size()) throw ShapeMismatchError("cosine: dimension mismatch");
  return u.values().dot(v.values());
}

/// Gradient of e -> cos(e/|e|, t) with respect to the unnormalized e.
template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> grad_cosine_wrt_embedding(const Eigen::MatrixBase<Derived>& e,
                                          const Eigen::Ref<const VectorX<Scalar>>& t) {
  if (e.size() != t.size()) throw ShapeMismatchError("grad_cosine: dimension mismatch");
  const Scalar norm = e.norm();
  if (!(norm > Scalar(kNormFloor))) throw ZeroNormError();
  const VectorX<Scalar> unit = e / norm;
  return (t - unit.dot(t) * unit) / norm;
}

template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> grad_cosine_wrt_embedding(const Eigen::MatrixBase<Derived>& e,
                                          const UnitEmbedding<Scalar>& t) {
  return grad_cosine_wrt_embedding(e, Eigen::Ref<const VectorX<Scalar>>(t.values()));
}

/// Componentwise clamp to [-eps, eps]. Idempotent.
template <typename Derived>
typename Derived::PlainObject project_linf(const Eigen::DenseBase<Derived>& delta,
                                           typename Derived::Scalar eps) {
  if (eps < 0) throw PreconditionError("project_linf: eps must be non-negative");
  return delta.derived().cwiseMax(-eps).cwiseMin(eps);
}

template <typename Derived>
typename Derived::PlainObject clip_unit(const Eigen::DenseBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.derived().cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
}

/// Numerically stable softmax of z / temp.
template <typename Derived, typename Scalar = typename Derived::Scalar>
VectorX<Scalar> softmax_with_temp(const Eigen::MatrixBase<Derived>& z, Scalar temp) {
  if (!(temp > 0)) throw PreconditionError("softmax_with_temp: temperature must be positive");
  const Scalar top = z.maxCoeff();
  VectorX<Scalar> p = ((z.array() - top) / temp).exp().matrix();
  return p / p.sum();
}

/// Index of the largest entry; ties go to the smallest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::DenseBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v.derived().coeff(i) > v.derived().coeff(best)) best = i;
  }
  return best;
}

/// Largest entry excluding `skip`, with its index (smallest index on ties).
template <typename Derived>
std::pair<Eigen::Index, typename Derived::Scalar> max_excluding(const Eigen::DenseBase<Derived>& v,
                                                                Eigen::Index skip) {
  using Scalar = typename Derived::Scalar;
  Eigen::Index best = -1;
  Scalar value = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v.derived().coeff(i) > value) {
      best = i;
      value = v.derived().coeff(i);
    }
  }
  if (best < 0) throw SingleClassError();
  return {best, value};
}

/// Central differences (fn(x + h e_i) - fn(x - h e_i)) / 2h per component.
template <typename Fn, typename Scalar>
VectorX<Scalar> finite_diff_gradient(Fn&& fn, const VectorX<Scalar>& x, Scalar h) {
  if (!(h > 0)) throw PreconditionError("finite_diff_gradient: h must be positive");
  VectorX<Scalar> grad(x.size());
  VectorX<Scalar> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const Scalar up = fn(probe);
    probe[i] = x[i] - h;
    const Scalar down = fn(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.derived().allFinite();
}

}  // namespace scc
