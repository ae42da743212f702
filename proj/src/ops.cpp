#include "stimpute/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "stimpute/error.hpp"

namespace stimpute {
namespace ops {

namespace {

thread_local KinkWatch* g_kink_watch = nullptr;

void require_rank(const Tensor& t, int rank, const char* op) {
    if (t.rank() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             " tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

/// Marks the output tracked when gradient flow reaches it; true means the
/// caller must record a backward rule on the current tape.
bool track_through(Tensor& out, std::initializer_list<const Tensor*> inputs) {
    if (!Tape::current()) return false;
    for (const Tensor* t : inputs) {
        if (t->tracked()) {
            out.mark_tracked();
            return true;
        }
    }
    return false;
}

}  // namespace

KinkWatch* set_kink_watch(KinkWatch* watch) {
    KinkWatch* previous = g_kink_watch;
    g_kink_watch = watch;
    return previous;
}

Tensor conv1d_dilated(const Tensor& input, const Tensor& weight, int dilation) {
    require_rank(input, 3, "conv1d_dilated");
    require_rank(weight, 3, "conv1d_dilated");
    if (dilation <= 0)
        throw ArgumentError("conv1d_dilated: dilation must be positive, got " +
                            std::to_string(dilation));
    const int c_in = input.dim(0), nodes = input.dim(1), t_in = input.dim(2);
    const int c_out = weight.dim(0), kernel = weight.dim(2);
    if (weight.dim(1) != c_in)
        throw DimensionError("conv1d_dilated: weight expects " + std::to_string(weight.dim(1)) +
                             " input channels, input has " + std::to_string(c_in));
    const int t_out = t_in - (kernel - 1) * dilation;
    if (t_out < 1)
        throw DimensionError("conv1d_dilated: time axis too short: T=" + std::to_string(t_in) +
                             ", kernel=" + std::to_string(kernel) +
                             ", dilation=" + std::to_string(dilation));

    Tensor out = Tensor::zeros({c_out, nodes, t_out});
    {
        const double* x = input.data();
        const double* w = weight.data();
        double* y = out.data();
        for (int co = 0; co < c_out; ++co) {
            for (int n = 0; n < nodes; ++n) {
                double* yrow = y + (static_cast<std::size_t>(co) * nodes + n) * t_out;
                for (int ci = 0; ci < c_in; ++ci) {
                    const double* wrow = w + (static_cast<std::size_t>(co) * c_in + ci) * kernel;
                    const double* xrow = x + (static_cast<std::size_t>(ci) * nodes + n) * t_in;
                    for (int j = 0; j < kernel; ++j) {
                        const double wj = wrow[j];
                        const double* xo = xrow + static_cast<std::size_t>(j) * dilation;
                        for (int t = 0; t < t_out; ++t) yrow[t] += wj * xo[t];
                    }
                }
            }
        }
    }

    if (track_through(out, {&input, &weight})) {
        Tape::current()->record([input, weight, out, dilation]() mutable {
            const int c_in = input.dim(0), nodes = input.dim(1), t_in = input.dim(2);
            const int c_out = weight.dim(0), kernel = weight.dim(2);
            const int t_out = out.dim(2);
            const double* gy = out.grad();
            if (input.tracked()) {
                double* gx = input.grad();
                const double* w = weight.data();
                for (int co = 0; co < c_out; ++co) {
                    for (int n = 0; n < nodes; ++n) {
                        const double* gyrow =
                            gy + (static_cast<std::size_t>(co) * nodes + n) * t_out;
                        for (int ci = 0; ci < c_in; ++ci) {
                            const double* wrow =
                                w + (static_cast<std::size_t>(co) * c_in + ci) * kernel;
                            double* gxrow =
                                gx + (static_cast<std::size_t>(ci) * nodes + n) * t_in;
                            for (int j = 0; j < kernel; ++j) {
                                const double wj = wrow[j];
                                double* gxo = gxrow + static_cast<std::size_t>(j) * dilation;
                                for (int t = 0; t < t_out; ++t) gxo[t] += wj * gyrow[t];
                            }
                        }
                    }
                }
            }
            if (weight.tracked()) {
                double* gw = weight.grad();
                const double* x = input.data();
                for (int co = 0; co < c_out; ++co) {
                    for (int n = 0; n < nodes; ++n) {
                        const double* gyrow =
                            gy + (static_cast<std::size_t>(co) * nodes + n) * t_out;
                        for (int ci = 0; ci < c_in; ++ci) {
                            double* gwrow =
                                gw + (static_cast<std::size_t>(co) * c_in + ci) * kernel;
                            const double* xrow =
                                x + (static_cast<std::size_t>(ci) * nodes + n) * t_in;
                            for (int j = 0; j < kernel; ++j) {
                                const double* xo = xrow + static_cast<std::size_t>(j) * dilation;
                                double acc = 0.0;
                                for (int t = 0; t < t_out; ++t) acc += gyrow[t] * xo[t];
                                gwrow[j] += acc;
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor conv1x1(const Tensor& input, const Tensor& weight) {
    require_rank(input, 3, "conv1x1");
    require_rank(weight, 2, "conv1x1");
    const int c_in = input.dim(0), nodes = input.dim(1), t_len = input.dim(2);
    const int c_out = weight.dim(0);
    if (weight.dim(1) != c_in)
        throw DimensionError("conv1x1: weight expects " + std::to_string(weight.dim(1)) +
                             " input channels, input has " + std::to_string(c_in));

    const std::size_t positions = static_cast<std::size_t>(nodes) * t_len;
    Tensor out = Tensor::zeros({c_out, nodes, t_len});
    {
        const double* x = input.data();
        const double* w = weight.data();
        double* y = out.data();
        for (int co = 0; co < c_out; ++co) {
            double* yrow = y + static_cast<std::size_t>(co) * positions;
            const double* wrow = w + static_cast<std::size_t>(co) * c_in;
            for (int ci = 0; ci < c_in; ++ci) {
                const double wv = wrow[ci];
                const double* xrow = x + static_cast<std::size_t>(ci) * positions;
                for (std::size_t p = 0; p < positions; ++p) yrow[p] += wv * xrow[p];
            }
        }
    }

    if (track_through(out, {&input, &weight})) {
        Tape::current()->record([input, weight, out, positions]() mutable {
            const int c_in = input.dim(0);
            const int c_out = weight.dim(0);
            const double* gy = out.grad();
            if (input.tracked()) {
                double* gx = input.grad();
                const double* w = weight.data();
                for (int co = 0; co < c_out; ++co) {
                    const double* gyrow = gy + static_cast<std::size_t>(co) * positions;
                    const double* wrow = w + static_cast<std::size_t>(co) * c_in;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double wv = wrow[ci];
                        double* gxrow = gx + static_cast<std::size_t>(ci) * positions;
                        for (std::size_t p = 0; p < positions; ++p) gxrow[p] += wv * gyrow[p];
                    }
                }
            }
            if (weight.tracked()) {
                double* gw = weight.grad();
                const double* x = input.data();
                for (int co = 0; co < c_out; ++co) {
                    const double* gyrow = gy + static_cast<std::size_t>(co) * positions;
                    double* gwrow = gw + static_cast<std::size_t>(co) * c_in;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* xrow = x + static_cast<std::size_t>(ci) * positions;
                        double acc = 0.0;
                        for (std::size_t p = 0; p < positions; ++p) acc += gyrow[p] * xrow[p];
                        gwrow[ci] += acc;
                    }
                }
            }
        });
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) yv[i] = std::tanh(xv[i]);
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const double* y = out.data();
            const double* gy = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < out.size(); ++i) gx[i] += (1.0 - y[i] * y[i]) * gy[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) yv[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const double* y = out.data();
            const double* gy = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < out.size(); ++i) gx[i] += y[i] * (1.0 - y[i]) * gy[i];
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    if (KinkWatch* watch = g_kink_watch) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (std::abs(xv[i]) <= watch->band) ++watch->hits;
    }
    for (std::size_t i = 0; i < x.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const double* xv = x.data();
            const double* gy = out.grad();
            double* gx = x.grad();
            // subgradient at the kink: derivative taken as 0 at x == 0
            for (std::size_t i = 0; i < out.size(); ++i)
                if (xv[i] > 0.0) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* yv = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) yv[i] = av[i] + bv[i];
    if (track_through(out, {&a, &b})) {
        Tape::current()->record([a, b, out]() mutable {
            const double* gy = out.grad();
            if (a.tracked()) {
                double* ga = a.grad();
                for (std::size_t i = 0; i < out.size(); ++i) ga[i] += gy[i];
            }
            if (b.tracked()) {
                double* gb = b.grad();
                for (std::size_t i = 0; i < out.size(); ++i) gb[i] += gy[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = Tensor::zeros(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* yv = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) yv[i] = av[i] * bv[i];
    if (track_through(out, {&a, &b})) {
        Tape::current()->record([a, b, out]() mutable {
            const double* gy = out.grad();
            if (a.tracked()) {
                const double* bv = b.data();
                double* ga = a.grad();
                for (std::size_t i = 0; i < out.size(); ++i) ga[i] += bv[i] * gy[i];
            }
            if (b.tracked()) {
                const double* av = a.data();
                double* gb = b.grad();
                for (std::size_t i = 0; i < out.size(); ++i) gb[i] += av[i] * gy[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) yv[i] = factor * xv[i];
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out, factor]() mutable {
            if (!x.tracked()) return;
            const double* gy = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < out.size(); ++i) gx[i] += factor * gy[i];
        });
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank())
        throw DimensionError("concat_channels: rank mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    for (int axis = 1; axis < a.rank(); ++axis)
        if (a.dim(axis) != b.dim(axis))
            throw DimensionError("concat_channels: trailing dims differ " +
                                 shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Shape out_shape = a.shape();
    out_shape[0] += b.dim(0);
    // axis 0 is the slowest-varying axis in row-major order, so the two data
    // blocks simply abut
    std::vector<double> data;
    data.reserve(a.size() + b.size());
    data.insert(data.end(), a.data(), a.data() + a.size());
    data.insert(data.end(), b.data(), b.data() + b.size());
    Tensor out = Tensor::from_data(std::move(out_shape), std::move(data));

    if (track_through(out, {&a, &b})) {
        Tape::current()->record([a, b, out]() mutable {
            const double* gy = out.grad();
            if (a.tracked()) {
                double* ga = a.grad();
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
            }
            if (b.tracked()) {
                double* gb = b.grad();
                const double* gyb = gy + a.size();
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] += gyb[i];
            }
        });
    }
    return out;
}

namespace {

struct AxisSpan {
    std::size_t outer, count, inner;
};

AxisSpan axis_span(const Shape& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size()))
        throw ArgumentError("axis " + std::to_string(axis) + " out of range for " +
                            shape_str(shape));
    AxisSpan s{1, static_cast<std::size_t>(shape[axis]), 1};
    for (int i = 0; i < axis; ++i) s.outer *= static_cast<std::size_t>(shape[i]);
    for (int i = axis + 1; i < static_cast<int>(shape.size()); ++i)
        s.inner *= static_cast<std::size_t>(shape[i]);
    return s;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    const AxisSpan span = axis_span(x.shape(), axis);
    Tensor out = Tensor::zeros(x.shape());
    const double* xv = x.data();
    double* yv = out.data();
    for (std::size_t o = 0; o < span.outer; ++o) {
        for (std::size_t in = 0; in < span.inner; ++in) {
            const std::size_t base = o * span.count * span.inner + in;
            double peak = -HUGE_VAL;
            for (std::size_t k = 0; k < span.count; ++k)
                peak = std::max(peak, xv[base + k * span.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < span.count; ++k) {
                const double e = std::exp(xv[base + k * span.inner] - peak);
                yv[base + k * span.inner] = e;
                total += e;
            }
            const double inv = 1.0 / total;
            for (std::size_t k = 0; k < span.count; ++k) yv[base + k * span.inner] *= inv;
        }
    }
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out, span]() mutable {
            if (!x.tracked()) return;
            const double* y = out.data();
            const double* gy = out.grad();
            double* gx = x.grad();
            for (std::size_t o = 0; o < span.outer; ++o) {
                for (std::size_t in = 0; in < span.inner; ++in) {
                    const std::size_t base = o * span.count * span.inner + in;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < span.count; ++k) {
                        const std::size_t i = base + k * span.inner;
                        dot += gy[i] * y[i];
                    }
                    for (std::size_t k = 0; k < span.count; ++k) {
                        const std::size_t i = base + k * span.inner;
                        gx[i] += y[i] * (gy[i] - dot);
                    }
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank(x, 3, "layer_norm");
    require_rank(gain, 1, "layer_norm");
    require_rank(bias, 1, "layer_norm");
    const int channels = x.dim(0);
    if (gain.dim(0) != channels || bias.dim(0) != channels)
        throw DimensionError("layer_norm: gain/bias must have one entry per channel");
    const std::size_t positions = static_cast<std::size_t>(x.dim(1)) * x.dim(2);

    Tensor out = Tensor::zeros(x.shape());
    auto mean = std::make_shared<std::vector<double>>(positions);
    auto inv_std = std::make_shared<std::vector<double>>(positions);
    {
        const double* xv = x.data();
        const double* g = gain.data();
        const double* b = bias.data();
        double* yv = out.data();
        for (std::size_t p = 0; p < positions; ++p) {
            double sum = 0.0;
            for (int c = 0; c < channels; ++c) sum += xv[c * positions + p];
            const double mu = sum / channels;
            double var = 0.0;
            for (int c = 0; c < channels; ++c) {
                const double d = xv[c * positions + p] - mu;
                var += d * d;
            }
            var /= channels;
            const double inv = 1.0 / std::sqrt(var + eps);
            (*mean)[p] = mu;
            (*inv_std)[p] = inv;
            for (int c = 0; c < channels; ++c)
                yv[c * positions + p] = (xv[c * positions + p] - mu) * inv * g[c] + b[c];
        }
    }

    if (track_through(out, {&x, &gain, &bias})) {
        Tape::current()->record([x, gain, bias, out, mean, inv_std, positions]() mutable {
            const int channels = x.dim(0);
            const double* xv = x.data();
            const double* g = gain.data();
            const double* gy = out.grad();
            for (std::size_t p = 0; p < positions; ++p) {
                const double mu = (*mean)[p];
                const double inv = (*inv_std)[p];
                if (x.tracked()) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int c = 0; c < channels; ++c) {
                        const std::size_t i = c * positions + p;
                        const double xhat = (xv[i] - mu) * inv;
                        const double dxhat = gy[i] * g[c];
                        s1 += dxhat;
                        s2 += dxhat * xhat;
                    }
                    double* gx = x.grad();
                    for (int c = 0; c < channels; ++c) {
                        const std::size_t i = c * positions + p;
                        const double xhat = (xv[i] - mu) * inv;
                        const double dxhat = gy[i] * g[c];
                        gx[i] += inv * (dxhat - s1 / channels - xhat * s2 / channels);
                    }
                }
                if (gain.tracked()) {
                    double* gg = gain.grad();
                    for (int c = 0; c < channels; ++c) {
                        const std::size_t i = c * positions + p;
                        gg[c] += gy[i] * (xv[i] - mu) * inv;
                    }
                }
                if (bias.tracked()) {
                    double* gb = bias.grad();
                    for (int c = 0; c < channels; ++c) gb[c] += gy[c * positions + p];
                }
            }
        });
    }
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dims disagree " + shape_str(a.shape()) + " * " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros({m, n});
    {
        const double* av = a.data();
        const double* bv = b.data();
        double* yv = out.data();
        for (int i = 0; i < m; ++i) {
            double* yrow = yv + static_cast<std::size_t>(i) * n;
            const double* arow = av + static_cast<std::size_t>(i) * k;
            for (int l = 0; l < k; ++l) {
                const double aval = arow[l];
                const double* brow = bv + static_cast<std::size_t>(l) * n;
                for (int j = 0; j < n; ++j) yrow[j] += aval * brow[j];
            }
        }
    }
    if (track_through(out, {&a, &b})) {
        Tape::current()->record([a, b, out]() mutable {
            const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
            const double* gy = out.grad();
            if (a.tracked()) {
                double* ga = a.grad();
                const double* bv = b.data();
                for (int i = 0; i < m; ++i) {
                    const double* gyrow = gy + static_cast<std::size_t>(i) * n;
                    double* garow = ga + static_cast<std::size_t>(i) * k;
                    for (int l = 0; l < k; ++l) {
                        const double* brow = bv + static_cast<std::size_t>(l) * n;
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += gyrow[j] * brow[j];
                        garow[l] += acc;
                    }
                }
            }
            if (b.tracked()) {
                double* gb = b.grad();
                const double* av = a.data();
                for (int i = 0; i < m; ++i) {
                    const double* gyrow = gy + static_cast<std::size_t>(i) * n;
                    const double* arow = av + static_cast<std::size_t>(i) * k;
                    for (int l = 0; l < k; ++l) {
                        const double aval = arow[l];
                        double* gbrow = gb + static_cast<std::size_t>(l) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += aval * gyrow[j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor transpose2d(const Tensor& x) {
    require_rank(x, 2, "transpose2d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor out = Tensor::zeros({n, m});
    {
        const double* xv = x.data();
        double* yv = out.data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                yv[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
    }
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const int m = x.dim(0), n = x.dim(1);
            const double* gy = out.grad();
            double* gx = x.grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    gx[static_cast<std::size_t>(i) * n + j] +=
                        gy[static_cast<std::size_t>(j) * m + i];
        });
    }
    return out;
}

Tensor slice_time(const Tensor& x, int t) {
    require_rank(x, 3, "slice_time");
    const int channels = x.dim(0), nodes = x.dim(1), t_len = x.dim(2);
    if (t < 0 || t >= t_len)
        throw ArgumentError("slice_time: index " + std::to_string(t) + " out of range for " +
                            shape_str(x.shape()));
    Tensor out = Tensor::zeros({channels, nodes});
    {
        const double* xv = x.data();
        double* yv = out.data();
        for (int c = 0; c < channels; ++c)
            for (int n = 0; n < nodes; ++n)
                yv[static_cast<std::size_t>(c) * nodes + n] =
                    xv[(static_cast<std::size_t>(c) * nodes + n) * t_len + t];
    }
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out, t]() mutable {
            if (!x.tracked()) return;
            const int channels = x.dim(0), nodes = x.dim(1), t_len = x.dim(2);
            const double* gy = out.grad();
            double* gx = x.grad();
            for (int c = 0; c < channels; ++c)
                for (int n = 0; n < nodes; ++n)
                    gx[(static_cast<std::size_t>(c) * nodes + n) * t_len + t] +=
                        gy[static_cast<std::size_t>(c) * nodes + n];
        });
    }
    return out;
}

Tensor crop_time_tail(const Tensor& x, int keep) {
    require_rank(x, 3, "crop_time_tail");
    const int channels = x.dim(0), nodes = x.dim(1), t_len = x.dim(2);
    if (keep <= 0 || keep > t_len)
        throw ArgumentError("crop_time_tail: cannot keep " + std::to_string(keep) +
                            " of T=" + std::to_string(t_len));
    const int offset = t_len - keep;
    Tensor out = Tensor::zeros({channels, nodes, keep});
    {
        const double* xv = x.data();
        double* yv = out.data();
        for (int c = 0; c < channels; ++c)
            for (int n = 0; n < nodes; ++n) {
                const double* xrow =
                    xv + (static_cast<std::size_t>(c) * nodes + n) * t_len + offset;
                double* yrow = yv + (static_cast<std::size_t>(c) * nodes + n) * keep;
                for (int t = 0; t < keep; ++t) yrow[t] = xrow[t];
            }
    }
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out, keep, offset]() mutable {
            if (!x.tracked()) return;
            const int channels = x.dim(0), nodes = x.dim(1), t_len = x.dim(2);
            const double* gy = out.grad();
            double* gx = x.grad();
            for (int c = 0; c < channels; ++c)
                for (int n = 0; n < nodes; ++n) {
                    double* gxrow =
                        gx + (static_cast<std::size_t>(c) * nodes + n) * t_len + offset;
                    const double* gyrow =
                        gy + (static_cast<std::size_t>(c) * nodes + n) * keep;
                    for (int t = 0; t < keep; ++t) gxrow[t] += gyrow[t];
                }
        });
    }
    return out;
}

Tensor stack_time(const std::vector<Tensor>& slices) {
    if (slices.empty()) throw ArgumentError("stack_time: no slices");
    const int channels = slices[0].dim(0);
    const int nodes = slices[0].rank() == 2 ? slices[0].dim(1) : -1;
    if (nodes < 0) throw DimensionError("stack_time: slices must be rank 2");
    for (const Tensor& s : slices) require_same_shape(s, slices[0], "stack_time");
    const int t_len = static_cast<int>(slices.size());

    Tensor out = Tensor::zeros({channels, nodes, t_len});
    {
        double* yv = out.data();
        for (int t = 0; t < t_len; ++t) {
            const double* sv = slices[t].data();
            for (int c = 0; c < channels; ++c)
                for (int n = 0; n < nodes; ++n)
                    yv[(static_cast<std::size_t>(c) * nodes + n) * t_len + t] =
                        sv[static_cast<std::size_t>(c) * nodes + n];
        }
    }

    bool any_tracked = false;
    if (Tape::current())
        for (const Tensor& s : slices) any_tracked = any_tracked || s.tracked();
    if (any_tracked) {
        out.mark_tracked();
        Tape::current()->record([slices, out]() mutable {
            const int channels = out.dim(0), nodes = out.dim(1), t_len = out.dim(2);
            const double* gy = out.grad();
            for (int t = 0; t < t_len; ++t) {
                Tensor s = slices[t];
                if (!s.tracked()) continue;
                double* gs = s.grad();
                for (int c = 0; c < channels; ++c)
                    for (int n = 0; n < nodes; ++n)
                        gs[static_cast<std::size_t>(c) * nodes + n] +=
                            gy[(static_cast<std::size_t>(c) * nodes + n) * t_len + t];
            }
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw DimensionError("reshape: element count mismatch " + shape_str(x.shape()) +
                             " -> " + shape_str(new_shape));
    Tensor out = Tensor::from_data(std::move(new_shape), x.data_vec());
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const double* gy = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < out.size(); ++i) gx[i] += gy[i];
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    const double* xv = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) total += xv[i];
    Tensor out = Tensor::scalar(total);
    if (track_through(out, {&x})) {
        Tape::current()->record([x, out]() mutable {
            if (!x.tracked()) return;
            const double g = out.grad()[0];
            double* gx = x.grad();
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

}  // namespace ops
}  // namespace stimpute
