#include "stimpute/model.hpp"

#include <algorithm>
#include <cmath>

#include "stimpute/error.hpp"
#include "stimpute/ops.hpp"

namespace stimpute {

std::vector<int> ModelConfig::temporal_lengths() const {
    std::vector<int> lengths{window_length()};
    for (int d : dilations) lengths.push_back(lengths.back() - (kernel_size - 1) * d);
    return lengths;
}

void ModelConfig::validate() const {
    if (num_nodes < 1) throw ConfigError("num_nodes must be positive");
    if (num_blocks < 1 || channels < 1 || embed_dim < 1 || attn_dim < 1 || skip_channels < 1)
        throw ConfigError("model dimensions must be positive");
    if (kernel_size < 2) throw ConfigError("kernel_size must be at least 2");
    if (past_steps < 1 || future_steps < 1)
        throw ConfigError("window needs at least one past and one future step");
    if (static_cast<int>(dilations.size()) != num_blocks)
        throw ConfigError("expected " + std::to_string(num_blocks) + " dilations, got " +
                          std::to_string(dilations.size()));
    int span = 0;
    for (int d : dilations) {
        if (d < 1) throw ConfigError("dilations must be positive");
        span += (kernel_size - 1) * d;
    }
    if (span != past_steps + future_steps)
        throw ConfigError("receptive field spans " + std::to_string(span) +
                          " steps, window needs exactly " +
                          std::to_string(past_steps + future_steps));
    for (int t : temporal_lengths())
        if (t < 1) throw ConfigError("temporal length underflows within the block stack");
}

std::vector<int> ModelConfig::solve_dilations(int num_blocks, int kernel_size, int past_steps,
                                              int future_steps) {
    if (num_blocks < 1) throw ConfigError("num_blocks must be positive");
    if (kernel_size < 2) throw ConfigError("kernel_size must be at least 2");
    const int span = past_steps + future_steps;
    if (span < 1) throw ConfigError("window span must be positive");
    if (span % (kernel_size - 1) != 0)
        throw ConfigError("window span " + std::to_string(span) +
                          " is not a multiple of kernel_size-1");
    const int budget = span / (kernel_size - 1);
    if (budget < num_blocks)
        throw ConfigError("window span supports at most " + std::to_string(budget) +
                          " blocks, config asks for " + std::to_string(num_blocks));

    // double until the remaining budget forces smaller steps; the last block
    // absorbs the residue so the receptive field lands exactly on the window
    std::vector<int> dilations;
    int used = 0;
    int run = 1;
    for (int l = 0; l + 1 < num_blocks; ++l) {
        const int later_blocks = num_blocks - 1 - l;
        const int cap = budget - used - later_blocks;
        const int d = std::min(run, cap);
        dilations.push_back(d);
        used += d;
        run = run >= 128 ? 1 : run * 2;
    }
    dilations.push_back(budget - used);
    return dilations;
}

ModelConfig ModelConfig::defaults(int num_nodes) {
    ModelConfig cfg;
    cfg.num_nodes = num_nodes;
    cfg.dilations = solve_dilations(cfg.num_blocks, cfg.kernel_size, cfg.past_steps,
                                    cfg.future_steps);
    return cfg;
}

namespace {

Tensor uniform_init(Shape shape, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor deep_copy(const Tensor& t) {
    return Tensor::from_data(t.shape(), t.data_vec(), t.requires_grad());
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
    config.validate();
    const int c = config.channels;
    const int k = config.kernel_size;
    const int d_c = c + config.embed_dim;

    ModelParams p;
    p.input_proj = uniform_init({c, 2}, 2, rng);
    p.blocks.reserve(static_cast<std::size_t>(config.num_blocks));
    for (int l = 0; l < config.num_blocks; ++l) {
        BlockParams b;
        b.filter_conv = uniform_init({c, c, k}, c * k, rng);
        b.gate_conv = uniform_init({c, c, k}, c * k, rng);
        b.attn_query = uniform_init({config.attn_dim, d_c}, d_c, rng);
        b.attn_key = uniform_init({config.attn_dim, d_c}, d_c, rng);
        b.ln_gain = Tensor::full({c}, 1.0);
        b.ln_gain.set_requires_grad(true);
        b.ln_bias = Tensor::zeros({c}, true);
        b.skip_proj = uniform_init({config.skip_channels, c}, c, rng);
        p.blocks.push_back(std::move(b));
    }
    {
        std::vector<double> e(shape_numel({config.num_nodes, config.embed_dim}));
        for (double& x : e) x = rng.normal(0.0, 0.1);
        p.node_embed = Tensor::from_data({config.num_nodes, config.embed_dim}, std::move(e), true);
    }
    p.head_hidden = uniform_init({config.skip_channels, config.skip_channels},
                                 config.skip_channels, rng);
    if (config.residual_head) {
        p.head_out = Tensor::zeros({1, config.skip_channels}, true);
    } else {
        p.head_out = uniform_init({1, config.skip_channels}, config.skip_channels, rng);
    }
    return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    config.validate();
    const int c = config.channels;
    ModelParams p;
    p.input_proj = Tensor::zeros({c, 2}, true);
    for (int l = 0; l < config.num_blocks; ++l) {
        BlockParams b;
        b.filter_conv = Tensor::zeros({c, c, config.kernel_size}, true);
        b.gate_conv = Tensor::zeros({c, c, config.kernel_size}, true);
        b.attn_query = Tensor::zeros({config.attn_dim, c + config.embed_dim}, true);
        b.attn_key = Tensor::zeros({config.attn_dim, c + config.embed_dim}, true);
        b.ln_gain = Tensor::zeros({c}, true);
        b.ln_bias = Tensor::zeros({c}, true);
        b.skip_proj = Tensor::zeros({config.skip_channels, c}, true);
        p.blocks.push_back(std::move(b));
    }
    p.node_embed = Tensor::zeros({config.num_nodes, config.embed_dim}, true);
    p.head_hidden = Tensor::zeros({config.skip_channels, config.skip_channels}, true);
    p.head_out = Tensor::zeros({1, config.skip_channels}, true);
    return p;
}

std::vector<NamedTensor> ModelParams::named() const {
    std::vector<NamedTensor> out;
    out.push_back({"input_proj", input_proj});
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        const std::string prefix = "block" + std::to_string(l) + ".";
        const BlockParams& b = blocks[l];
        out.push_back({prefix + "filter_conv", b.filter_conv});
        out.push_back({prefix + "gate_conv", b.gate_conv});
        out.push_back({prefix + "attn_query", b.attn_query});
        out.push_back({prefix + "attn_key", b.attn_key});
        out.push_back({prefix + "ln_gain", b.ln_gain});
        out.push_back({prefix + "ln_bias", b.ln_bias});
        out.push_back({prefix + "skip_proj", b.skip_proj});
    }
    out.push_back({"node_embed", node_embed});
    out.push_back({"head_hidden", head_hidden});
    out.push_back({"head_out", head_out});
    return out;
}

void ModelParams::zero_grad() const {
    for (const NamedTensor& p : named()) p.tensor.zero_grad();
}

std::size_t ModelParams::count() const {
    std::size_t total = 0;
    for (const NamedTensor& p : named()) total += p.tensor.size();
    return total;
}

bool ModelParams::all_finite() const {
    for (const NamedTensor& p : named())
        if (!p.tensor.all_finite()) return false;
    return true;
}

ModelParams ModelParams::clone() const {
    ModelParams c;
    c.input_proj = deep_copy(input_proj);
    c.blocks.reserve(blocks.size());
    for (const BlockParams& b : blocks)
        c.blocks.push_back({deep_copy(b.filter_conv), deep_copy(b.gate_conv),
                            deep_copy(b.attn_query), deep_copy(b.attn_key), deep_copy(b.ln_gain),
                            deep_copy(b.ln_bias), deep_copy(b.skip_proj)});
    c.node_embed = deep_copy(node_embed);
    c.head_hidden = deep_copy(head_hidden);
    c.head_out = deep_copy(head_out);
    return c;
}

void ModelParams::copy_values_from(const ModelParams& other) const {
    const std::vector<NamedTensor> dst = named();
    const std::vector<NamedTensor> src = other.named();
    if (dst.size() != src.size())
        throw DimensionError("copy_values_from: parameter sets differ in structure");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].tensor.shape() != src[i].tensor.shape())
            throw DimensionError("copy_values_from: shape mismatch at " + dst[i].name);
        dst[i].tensor.data_vec() = src[i].tensor.data_vec();
    }
}

Tensor input_projection(const Tensor& x, const Tensor& m, const Tensor& proj) {
    if (x.rank() != 3 || x.dim(0) != 1)
        throw DimensionError("input_projection: expected [1 x N x T] window, got " +
                             shape_str(x.shape()));
    if (m.shape() != x.shape())
        throw DimensionError("input_projection: value and mask windows differ in shape");
    return ops::conv1x1(ops::concat_channels(x, m), proj);
}

Tensor gated_tcn_forward(const Tensor& x_prev, const BlockParams& block, int dilation) {
    const int kernel = block.filter_conv.dim(2);
    if (x_prev.dim(2) <= (kernel - 1) * dilation)
        throw ConfigError("temporal length " + std::to_string(x_prev.dim(2)) +
                          " too short for kernel " + std::to_string(kernel) + " at dilation " +
                          std::to_string(dilation));
    return ops::mul(ops::tanh(ops::conv1d_dilated(x_prev, block.filter_conv, dilation)),
                    ops::sigmoid(ops::conv1d_dilated(x_prev, block.gate_conv, dilation)));
}

Tensor attention_scores(const Tensor& hidden, const Tensor& node_embed, const Tensor& attn_query,
                        const Tensor& attn_key) {
    Tensor he = ops::concat_channels(hidden, ops::transpose2d(node_embed));
    Tensor q = ops::matmul(attn_query, he);  // [d' x N]
    Tensor k = ops::matmul(attn_key, he);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(attn_query.dim(0)));
    Tensor scores = ops::scale(ops::matmul(ops::transpose2d(q), k), inv_sqrt_d);  // [N x N]
    return ops::softmax(scores, 1);
}

Tensor dan_forward(const Tensor& x, const Tensor& node_embed, const Tensor& attn_query,
                   const Tensor& attn_key, std::vector<Tensor>* attention_out,
                   const Tensor* fixed_attention) {
    const int steps = x.dim(2);
    std::vector<Tensor> mixed;
    mixed.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        Tensor h = ops::slice_time(x, t);  // [C x N]
        Tensor alpha = fixed_attention
                           ? *fixed_attention
                           : attention_scores(h, node_embed, attn_query, attn_key);
        if (attention_out) attention_out->push_back(alpha);
        // out[., i] = sum_j alpha(i, j) h[., j]
        mixed.push_back(ops::matmul(h, ops::transpose2d(alpha)));
    }
    return ops::stack_time(mixed);
}

BlockResult st_block_forward(const Tensor& x_prev, const BlockParams& block,
                             const Tensor& node_embed, int dilation, BlockTrace* trace) {
    Tensor x_t = gated_tcn_forward(x_prev, block, dilation);
    // skip tap: last time step of the TCN output, lifted to skip channels
    Tensor skip = ops::conv1x1(ops::crop_time_tail(x_t, 1), block.skip_proj);
    Tensor normed = ops::layer_norm(x_t, block.ln_gain, block.ln_bias, kLayerNormEps);
    std::vector<Tensor>* alphas = nullptr;
    if (trace) {
        trace->tcn_out = x_t;
        trace->skip = skip;
        trace->attention.clear();
        alphas = &trace->attention;
    }
    Tensor x_s = dan_forward(normed, node_embed, block.attn_query, block.attn_key, alphas);
    Tensor x_out = ops::add(x_s, ops::crop_time_tail(x_prev, x_t.dim(2)));
    if (trace) {
        trace->attn_out = x_s;
        trace->block_out = x_out;
    }
    return {x_out, skip};
}

namespace {

// Parameter-free imputation anchor for the residual head: per node, linear
// interpolation between the nearest visible entries on each side of the
// center step (flat when only one side has a visible entry, zero — the
// per-node mean in normalized space — when the whole row is hidden). Uses
// visible entries only, so the leak-freedom guarantee is preserved.
Tensor residual_anchor(const WindowSample& sample, int num_nodes, int window, int center) {
    std::vector<double> anchor(static_cast<std::size_t>(num_nodes), 0.0);
    const double* x = sample.x_window.data();
    const double* m = sample.m_window.data();
    for (int n = 0; n < num_nodes; ++n) {
        const double* xr = x + static_cast<std::size_t>(n) * window;
        const double* mr = m + static_cast<std::size_t>(n) * window;
        int lo = -1, hi = -1;
        for (int w = center; w >= 0; --w)
            if (mr[w] != 0.0) {
                lo = w;
                break;
            }
        for (int w = center; w < window; ++w)
            if (mr[w] != 0.0) {
                hi = w;
                break;
            }
        if (lo >= 0 && hi >= 0)
            anchor[static_cast<std::size_t>(n)] =
                lo == hi ? xr[lo]
                         : xr[lo] + (xr[hi] - xr[lo]) * static_cast<double>(center - lo) /
                                        static_cast<double>(hi - lo);
        else if (lo >= 0)
            anchor[static_cast<std::size_t>(n)] = xr[lo];
        else if (hi >= 0)
            anchor[static_cast<std::size_t>(n)] = xr[hi];
    }
    return Tensor::from_data({num_nodes}, std::move(anchor));
}

}  // namespace

Tensor model_forward(const WindowSample& sample, const ModelParams& params,
                     const ModelConfig& config, ForwardTrace* trace) {
    config.validate();
    const Shape expected{1, config.num_nodes, config.window_length()};
    if (sample.x_window.shape() != expected)
        throw DimensionError("model_forward: window shaped " + shape_str(sample.x_window.shape()) +
                             ", config expects " + shape_str(expected));
    if (sample.m_window.shape() != sample.x_window.shape())
        throw DimensionError("model_forward: value and mask windows differ in shape");
    if (static_cast<int>(params.blocks.size()) != config.num_blocks)
        throw ConfigError("parameter set has " + std::to_string(params.blocks.size()) +
                          " blocks, config expects " + std::to_string(config.num_blocks));

    if (trace) {
        trace->blocks.clear();
        trace->blocks.resize(static_cast<std::size_t>(config.num_blocks));
    }

    Tensor x = input_projection(sample.x_window, sample.m_window, params.input_proj);
    Tensor skip_sum;
    for (int l = 0; l < config.num_blocks; ++l) {
        BlockTrace* bt = trace ? &trace->blocks[static_cast<std::size_t>(l)] : nullptr;
        BlockResult r = st_block_forward(x, params.blocks[static_cast<std::size_t>(l)],
                                         params.node_embed,
                                         config.dilations[static_cast<std::size_t>(l)], bt);
        skip_sum = l == 0 ? r.skip : ops::add(skip_sum, r.skip);
        x = r.block_out;
    }
    if (x.dim(2) != 1)
        throw ConfigError("temporal chain ended at length " + std::to_string(x.dim(2)) +
                          ", expected 1");
    if (trace) trace->skip_sum = skip_sum;

    Tensor h = ops::relu(skip_sum);             // [skip x N x 1]
    h = ops::relu(ops::conv1x1(h, params.head_hidden));
    h = ops::conv1x1(h, params.head_out);       // [1 x N x 1]
    Tensor out = ops::reshape(h, {config.num_nodes});
    if (config.residual_head)
        out = ops::add(out, residual_anchor(sample, config.num_nodes, config.window_length(),
                                            config.past_steps));
    return out;
}

Tensor masked_mse_loss(const Tensor& x_hat, const Tensor& x_true, const Tensor& eval_mask) {
    if (x_hat.rank() != 1 || x_true.shape() != x_hat.shape() ||
        eval_mask.shape() != x_hat.shape())
        throw DimensionError("masked_mse_loss: inputs must be equal-length vectors");
    double count = 0.0;
    for (std::size_t i = 0; i < eval_mask.size(); ++i) {
        const double v = eval_mask.data()[i];
        if (v != 0.0 && v != 1.0) throw ArgumentError("masked_mse_loss: eval_mask must be 0/1");
        count += v;
    }
    if (count == 0.0) return Tensor::scalar(0.0);
    Tensor diff = ops::add(x_hat, ops::scale(x_true, -1.0));
    return ops::scale(ops::sum_all(ops::mul(eval_mask, ops::mul(diff, diff))), 1.0 / count);
}

}  // namespace stimpute
