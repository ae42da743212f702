#pragma once

#include <vector>

#include "stimpute/tensor.hpp"

namespace stimpute {
namespace ops {

// Differentiable operator set. Every op computes its result eagerly and, when
// a Tape is active and an input is tracked, records a backward rule that
// accumulates gradients additively into its inputs. With no active tape the
// ops are plain math (inference path).

/// Valid (unpadded) convolution along the time axis, applied independently
/// per node: out[c,n,t] = sum_{c',j} weight[c,c',j] * input[c',n,t + j*dilation].
/// input [C_in x N x T], weight [C_out x C_in x k] -> [C_out x N x T-(k-1)*dilation].
Tensor conv1d_dilated(const Tensor& input, const Tensor& weight, int dilation);

/// Per-position linear map over channels. input [C_in x N x T],
/// weight [C_out x C_in] -> [C_out x N x T].
Tensor conv1x1(const Tensor& input, const Tensor& weight);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

/// Elementwise sum / product; shapes must match exactly (no broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply by a compile-time-constant scalar (not a learnable input).
Tensor scale(const Tensor& x, double factor);

/// Concatenate along axis 0; ranks and trailing dims must agree. Covers both
/// channel concatenation of [C x N x T] feature maps and vector concatenation.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, int axis);

/// Layer normalization over the channel axis of [C x N x T], independently
/// at each (node, time) position: (x - mean)/sqrt(var + eps) * gain + bias,
/// with gain and bias per channel ([C]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Plain 2-D matrix product [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose2d(const Tensor& x);

/// One time step of [C x N x T] as a [C x N] matrix.
Tensor slice_time(const Tensor& x, int t);

/// Last `keep` time steps of [C x N x T].
Tensor crop_time_tail(const Tensor& x, int keep);

/// Inverse of slice_time over a whole axis: T slices [C x N] -> [C x N x T].
Tensor stack_time(const std::vector<Tensor>& slices);

Tensor reshape(const Tensor& x, Shape new_shape);

/// Sum of all elements as a scalar tensor.
Tensor sum_all(const Tensor& x);

/// Observation hook for gradient checking: while installed, relu() counts
/// inputs within `band` of its kink at 0 so finite-difference probes that
/// straddle the kink can be excluded instead of reported as failures.
struct KinkWatch {
    double band = 0.0;
    long hits = 0;
};

/// Installs (or clears, with nullptr) the thread-local watch; returns the
/// previously installed one.
KinkWatch* set_kink_watch(KinkWatch* watch);

}  // namespace ops
}  // namespace stimpute
