#pragma once

#include <vector>

#include "duocast/autograd.hpp"

namespace duocast {

// Stride-1 convolution with same-size zero padding. Kernel layout is
// [out_channels, in_channels / groups, k, k] with k odd; groups == channels
// gives a depth-wise convolution.
struct Conv2dSpec {
  int dilation = 1;
  int groups = 1;
};

template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> kernel, const Conv2dSpec& spec = {});
template <class Real>
Var<Real> conv2d(Var<Real> x, Var<Real> kernel, Var<Real> bias, const Conv2dSpec& spec = {});

// Per-pixel convolution along the frame axis of an [S, C, H, W] tensor.
// Kernel [C, K] (K odd, K <= S), centered, zero padded in time.
template <class Real>
Var<Real> conv_temporal(Var<Real> x, Var<Real> kernel);

template <class Real>
Var<Real> avg_pool2(Var<Real> x);
template <class Real>
Var<Real> upsample2(Var<Real> x);
// Lossless r x r block <-> channel rearrangements.
template <class Real>
Var<Real> space_to_depth(Var<Real> x, int r);
template <class Real>
Var<Real> depth_to_space(Var<Real> x, int r);

template <class Real>
Var<Real> concat(const std::vector<Var<Real>>& xs, int axis);
template <class Real>
Var<Real> slice(Var<Real> x, int axis, int start, int count);
template <class Real>
Var<Real> gather_channels(Var<Real> x, const std::vector<int>& channels);
template <class Real>
Var<Real> reshape(Var<Real> x, Shape shape);

template <class Real>
Var<Real> add(Var<Real> a, Var<Real> b);
template <class Real>
Var<Real> sub(Var<Real> a, Var<Real> b);
template <class Real>
Var<Real> mul(Var<Real> a, Var<Real> b);
template <class Real>
Var<Real> scale(Var<Real> a, double s);
// x [N, C, H, W] plus v (C values) broadcast over N, H, W.
template <class Real>
Var<Real> add_channel_bias(Var<Real> x, Var<Real> v);
// x [M, N] plus b (N values) broadcast over rows.
template <class Real>
Var<Real> add_row_bias(Var<Real> x, Var<Real> b);

template <class Real>
Var<Real> silu(Var<Real> x);
template <class Real>
Var<Real> relu(Var<Real> x);
template <class Real>
Var<Real> clamp(Var<Real> x, double lo, double hi);
// Keeps values >= theta, zeroes the rest.
template <class Real>
Var<Real> threshold_mask(Var<Real> x, double theta);

// op(a) * op(b) for rank-2 operands; op transposes when the flag is set.
template <class Real>
Var<Real> matmul(Var<Real> a, Var<Real> b, bool transpose_a = false, bool transpose_b = false);
// Row-wise softmax of an [M, N] matrix (max-subtracted).
template <class Real>
Var<Real> softmax_rows(Var<Real> x);

template <class Real>
Var<Real> sum(Var<Real> x);
template <class Real>
Var<Real> mean(Var<Real> x);
template <class Real>
Var<Real> mse(Var<Real> a, Var<Real> b);

template <class Real>
struct AttentionOutput {
  Var<Real> output;   // [1, Cv, H, W]
  Var<Real> weights;  // [H*W (queries), H*W (keys)], rows sum to 1
};

// softmax(Q K^T / sqrt(d_k)) V with Q, K, V produced by (grouped) convolution
// projections of [1, C, H, W] sources; tokens are spatial positions.
template <class Real>
AttentionOutput<Real> cross_attention(Var<Real> query_src, Var<Real> kv_src, Var<Real> wq, Var<Real> wk,
                                      Var<Real> wv);
template <class Real>
AttentionOutput<Real> self_attention(Var<Real> x, Var<Real> wq, Var<Real> wk, Var<Real> wv);

template <class Real>
Var<Real> operator+(Var<Real> a, Var<Real> b) { return add(a, b); }
template <class Real>
Var<Real> operator-(Var<Real> a, Var<Real> b) { return sub(a, b); }
template <class Real>
Var<Real> operator*(Var<Real> a, Var<Real> b) { return mul(a, b); }

}  // namespace duocast
