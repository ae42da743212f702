#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stimpute/data.hpp"
#include "stimpute/rng.hpp"
#include "stimpute/tensor.hpp"

namespace stimpute {

/// Epsilon inside each block's layer normalization.
constexpr double kLayerNormEps = 1e-5;

/// Architecture hyperparameters. The temporal design is rigid: a window of
/// T_p past and T_f future steps around the (hidden) target step enters a
/// stack of gated dilated convolutions whose receptive field must consume
/// the window exactly, leaving a single time step at the top.
struct ModelConfig {
    int num_nodes = 0;           // N, fixed by the dataset
    int num_blocks = 4;          // stacked spatio-temporal blocks
    int channels = 32;           // C, hidden width of every block
    int kernel_size = 2;         // k
    std::vector<int> dilations;  // d^l per block; empty = solve on demand
    int embed_dim = 16;          // node embedding width
    int attn_dim = 64;           // d', attention projection width
    int skip_channels = 64;
    int past_steps = 6;          // T_p
    int future_steps = 6;        // T_f

    // When set, the head emits a correction added to a parameter-free
    // anchor: per-node linear interpolation of the window's visible entries
    // toward the center step (flat when only one side is visible, zero when
    // the node's window is fully hidden). The final head layer initializes
    // to zero so training starts from the anchor's accuracy and learns only
    // the correction. Off by default.
    bool residual_head = false;

    int window_length() const { return past_steps + future_steps + 1; }

    /// T^0..T^{num_blocks}: window length shrinking by (k-1)*d^l per block.
    std::vector<int> temporal_lengths() const;

    /// Throws ConfigError unless all dims are positive, dilations match
    /// num_blocks, and sum((k-1)*d^l) == T_p + T_f (final length exactly 1).
    void validate() const;

    /// Doubling dilations 1,2,4,... with the last chosen residually so the
    /// receptive-field identity holds; e.g. 4 blocks over a 13-step window
    /// give (1,2,4,5).
    static std::vector<int> solve_dilations(int num_blocks, int kernel_size, int past_steps,
                                            int future_steps);

    /// Stock configuration for N nodes, dilations solved.
    static ModelConfig defaults(int num_nodes);

    WindowConfig window_config() const { return {past_steps, future_steps}; }
};

/// Learnable tensors of one spatio-temporal block.
struct BlockParams {
    Tensor filter_conv;  // [C x C x k], tanh branch
    Tensor gate_conv;    // [C x C x k], sigmoid branch
    Tensor attn_query;   // [d' x (C + embed_dim)]
    Tensor attn_key;     // [d' x (C + embed_dim)]
    Tensor ln_gain;      // [C]
    Tensor ln_bias;      // [C]
    Tensor skip_proj;    // [skip_channels x C]
};

/// The full parameter set. Tensors are shared handles: named() aliases the
/// same storage the forward pass reads, which is what optimizers mutate.
struct ModelParams {
    Tensor input_proj;  // [C x 2], lifts value-and-mask input
    std::vector<BlockParams> blocks;
    Tensor node_embed;   // [N x embed_dim]
    Tensor head_hidden;  // [skip_channels x skip_channels]
    Tensor head_out;     // [1 x skip_channels]

    /// Weights ~ uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); embeddings
    /// ~ normal(0, 0.1); layer-norm gain 1, bias 0. Draw order is the
    /// named() order, so a seed pins the whole initialization.
    static ModelParams init(const ModelConfig& config, Rng& rng);

    /// All-zero parameters of the right shapes (tests, checkpoint loading).
    static ModelParams zeros(const ModelConfig& config);

    /// Stable name -> tensor listing; the checkpoint block order.
    std::vector<NamedTensor> named() const;

    void zero_grad() const;
    std::size_t count() const;  // total scalar parameters
    bool all_finite() const;

    /// Deep copy with fresh storage (snapshots for early stopping).
    ModelParams clone() const;

    /// Copies values (not grads) from a same-shaped parameter set.
    void copy_values_from(const ModelParams& other) const;
};

/// Intermediate tensors of one forward pass, for tests and diagnostics.
struct BlockTrace {
    Tensor tcn_out;                 // [C x N x T^l]
    std::vector<Tensor> attention;  // per kept time step, [N x N]
    Tensor attn_out;                // [C x N x T^l]
    Tensor block_out;               // [C x N x T^l]
    Tensor skip;                    // [skip_channels x N x 1]
};

struct ForwardTrace {
    std::vector<BlockTrace> blocks;
    Tensor skip_sum;  // [skip_channels x N x 1]
};

/// Conv_1x1(x || m): two input channels (value, visibility) lifted to C.
Tensor input_projection(const Tensor& x, const Tensor& m, const Tensor& proj);

/// tanh(W_f * x) ⊙ sigmoid(W_g * x) with valid padding; the time axis
/// shrinks by (k-1)*dilation.
Tensor gated_tcn_forward(const Tensor& x_prev, const BlockParams& block, int dilation);

/// Row-stochastic attention for one time step:
///   score(i,j) = <W_q (h_i || e_i), W_k (h_j || e_j)> / sqrt(d')
/// softmaxed over j.
Tensor attention_scores(const Tensor& hidden, const Tensor& node_embed, const Tensor& attn_query,
                        const Tensor& attn_key);

/// Applies per-time-step attention mixing: out[., i, t] = sum_j alpha(i,j) x[., j, t].
/// `attention_out`, when given, collects each step's alpha; `fixed_attention`
/// substitutes a constant alpha for every step (linearity and identity tests).
Tensor dan_forward(const Tensor& x, const Tensor& node_embed, const Tensor& attn_query,
                   const Tensor& attn_key, std::vector<Tensor>* attention_out = nullptr,
                   const Tensor* fixed_attention = nullptr);

/// One block: gated TCN, skip tap, layer norm, attention, residual sum with
/// the input cropped to the new temporal length. Returns (block_out, skip).
struct BlockResult {
    Tensor block_out;
    Tensor skip;
};
BlockResult st_block_forward(const Tensor& x_prev, const BlockParams& block,
                             const Tensor& node_embed, int dilation,
                             BlockTrace* trace = nullptr);

/// The whole network: projection, block stack, skip sum, ReLU-linear-ReLU-
/// linear head; output is the normalized imputed value per node.
Tensor model_forward(const WindowSample& sample, const ModelParams& params,
                     const ModelConfig& config, ForwardTrace* trace = nullptr);

/// Mean squared error over eval_mask==1 entries; an all-zero mask yields a
/// constant 0 (the sample carries no training signal).
Tensor masked_mse_loss(const Tensor& x_hat, const Tensor& x_true, const Tensor& eval_mask);

}  // namespace stimpute
