// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpose/tensor.hpp"

namespace dpose {

// ---------------------------------------------------------------------------
// Elementwise. Binary ops broadcast numpy-style (trailing dims aligned,
// extent 1 stretches).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor square(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

// ---------------------------------------------------------------------------
// Reductions (to a scalar of shape []).

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over elements with mask != 0. An empty mask yields a constant 0.
Tensor masked_mean(const Tensor& x, std::span<const std::uint8_t> mask);

// ---------------------------------------------------------------------------
// Layout.

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t begin, std::int64_t end);

// ---------------------------------------------------------------------------
// Linear algebra.

Tensor matmul(const Tensor& a, const Tensor& b);                       // [M,K]x[K,N]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);  // [B,I]x[I,O]+[O]
/// y[b] = M * x[b] for a constant row-major matrix M of size rows x cols and
/// x of shape [B, cols, D].
Tensor apply_matrix(std::span<const double> matrix, std::int64_t rows, std::int64_t cols, const Tensor& x);

// ---------------------------------------------------------------------------
// Network layers.

/// Cross-correlation of x[B,Cin,H,W] with weight[Cout,Cin,kh,kw] plus bias[Cout].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding);

enum class Mode { train, eval };

struct BatchNormConfig {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Per-channel normalisation of x[B,C,H,W]. Train mode uses batch statistics
/// and updates the running buffers in place (biased mean, unbiased variance);
/// eval mode reads the running buffers.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, Mode mode, BatchNormConfig config = {});

/// Bilinear x2 upsampling with half-pixel centres (align_corners = false).
Tensor upsample_bilinear2x(const Tensor& x);

/// Softmax over the H*W cells of every (b, c) plane of x[B,C,H,W].
Tensor spatial_softmax(const Tensor& x);

/// A[b,p,c] = sum_hw attn[b,p,hw] * feat[b,c,hw].
Tensor contract_attention(const Tensor& attn, const Tensor& feat);

/// Mean over all B*H*W pixels of -log softmax(logits[b,:,h,w])[label].
Tensor cross_entropy_2d(const Tensor& logits, std::span<const std::int32_t> labels);

/// Per-head affine maps: y[b,j,o] = sum_d x[b,j,d] * weight[j,d,o] + bias[j,o].
Tensor multilinear(const Tensor& x, const Tensor& weight, const Tensor& bias);

}  // namespace dpose
