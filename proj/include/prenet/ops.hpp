#pragma once

#include <span>
#include <vector>

#include "prenet/tensor.hpp"

namespace prenet {

/// 3x3 convolution, stride 1, zero padding 1. `bias` may be undefined.
///
/// out[n,o,y,x] = bias[o] + sum_{i,dy,dx} weight[o,i,dy,dx] * in[n,i,y+dy-1,x+dx-1]
///
/// Lowered per sample to an im2col matrix of shape (ci*9, h*w) and one GEMM,
/// rows ordered (i, dy, dx). For a fixed build and shape every reduction runs
/// in the same order, so results are bit-reproducible.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Channels [begin, end).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);
// 1 - x, used by the GRU update gate.
template <typename T>
Tensor<T> one_minus(const Tensor<T>& x);

// Scalar results, shape (1,1,1,1). Accumulated left to right in double.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Same-size depthwise filtering with a fixed separable kernel: rows first,
/// then columns, each with zero fill outside the image. `taps` has odd length
/// and is not differentiated.
template <typename T>
Tensor<T> separable_filter(const Tensor<T>& x, std::span<const double> taps);

}  // namespace prenet
