#pragma once

// Differentiable operations over Tensor.
//
// Broadcasting is deliberately narrow: binary elementwise ops accept equal
// shapes, a single-element operand, or an operand whose shape is a trailing
// suffix of the other's (leading batch dimensions). matmul broadcasts only a
// rank-2 operand across the other's batch dimensions. Everything else throws
// ShapeError.
//
// relu'(0) is taken as 0.

#include <cstddef>
#include <span>
#include <vector>

#include "lsinet/autodiff/tensor.hpp"

namespace lsinet::ad {

// [..., p, q] x [..., q, r] -> [..., p, r]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> neg(const Tensor<T>& x);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> exp(const Tensor<T>& x);
// Throws DomainError naming the first non-positive entry.
template <typename T>
Tensor<T> log(const Tensor<T>& x);
// Gradient passes where lo <= x <= hi, zero elsewhere.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  return concat(std::span<const Tensor<T>>(parts), axis);
}
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// Collapses axes [start_axis, rank) into one.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x, std::size_t start_axis = 0);
// Swaps two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis_a, std::size_t axis_b);
// Contiguous range [start, start + length) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t length);
// Rows of a rank-2 tensor, repeated as listed. Backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> rows);

// Forward value is `forward_value`; the gradient flows to `x` unchanged.
template <typename T>
Tensor<T> straight_through(const Tensor<T>& x, std::vector<T> forward_value);

// Convenience compositions.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& prediction, const Tensor<T>& target);

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& x) { return neg(x); }

}  // namespace lsinet::ad
