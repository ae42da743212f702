// Acceptance gate: ten end-to-end checks, one pass/fail line each.
// Exit code 0 iff every check passes.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "stimpute/checkpoint.hpp"
#include "stimpute/data.hpp"
#include "stimpute/gradcheck.hpp"
#include "stimpute/metrics.hpp"
#include "stimpute/model.hpp"
#include "stimpute/train.hpp"

using namespace stimpute;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    char buf[512];
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

WindowSample random_sample(const ModelConfig& cfg, Rng& rng) {
    const int nodes = cfg.num_nodes;
    const int window = cfg.window_length();
    WindowSample s;
    std::vector<double> xw(static_cast<std::size_t>(nodes) * window, 0.0);
    std::vector<double> mw(static_cast<std::size_t>(nodes) * window, 0.0);
    for (int n = 0; n < nodes; ++n)
        for (int w = 0; w < window; ++w) {
            if (w == cfg.past_steps) continue;
            const std::size_t i = static_cast<std::size_t>(n) * window + w;
            xw[i] = rng.uniform(-1.5, 1.5);
            mw[i] = 1.0;
        }
    s.x_window = Tensor::from_data({1, nodes, window}, std::move(xw));
    s.m_window = Tensor::from_data({1, nodes, window}, std::move(mw));
    s.target_index = cfg.past_steps;

    std::vector<double> truth(static_cast<std::size_t>(nodes));
    std::vector<double> eval(static_cast<std::size_t>(nodes), 0.0);
    for (int n = 0; n < nodes; ++n) {
        truth[static_cast<std::size_t>(n)] = rng.uniform(-1.5, 1.5);
        if (n % 2 == 0) {
            eval[static_cast<std::size_t>(n)] = 1.0;
            ++s.eval_count;
        }
    }
    s.x_true_t = Tensor::from_data({nodes}, std::move(truth));
    s.eval_mask_t = Tensor::from_data({nodes}, std::move(eval));
    return s;
}

// 1. Full-model finite-difference gradient check on a tiny instance.
Outcome check_gradients() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.num_nodes = 3;
    cfg.num_blocks = 2;
    cfg.channels = 4;
    cfg.embed_dim = 3;
    cfg.attn_dim = 5;
    cfg.skip_channels = 6;
    cfg.past_steps = 2;
    cfg.future_steps = 2;
    cfg.dilations = ModelConfig::solve_dilations(2, 2, 2, 2);
    cfg.validate();

    Rng rng(41);
    const ModelParams params = ModelParams::init(cfg, rng);
    const WindowSample sample = random_sample(cfg, rng);
    const auto forward = [&] {
        return masked_mse_loss(model_forward(sample, params, cfg), sample.x_true_t,
                               sample.eval_mask_t);
    };
    const GradCheckReport report = grad_check(forward, params.named(), 1e-5, 1e-4);
    const double secs = elapsed(t0);
    return {report.pass && secs < 60.0,
            fmt("max rel err %.3e over %zu coords (%zu kink-excluded), %.1f s (limit 60)",
                report.max_rel_err, report.checked, report.excluded, secs)};
}

// 2. The dilation stack consumes the default window exactly, one step left.
Outcome check_shapes() {
    const auto t0 = Clock::now();
    const ModelConfig cfg = ModelConfig::defaults(8);
    const std::vector<int> lengths = cfg.temporal_lengths();
    bool ok = lengths.size() == static_cast<std::size_t>(cfg.num_blocks) + 1 &&
              lengths.front() == cfg.window_length() && lengths.back() == 1;
    std::string chain = std::to_string(lengths[0]);
    for (std::size_t l = 1; l < lengths.size(); ++l) {
        ok = ok && lengths[l] == lengths[l - 1] - (cfg.kernel_size - 1) * cfg.dilations[l - 1];
        chain += " -> " + std::to_string(lengths[l]);
    }
    return {ok && elapsed(t0) < 1.0, fmt("lengths %s with dilations d=(1,2,4,5)", chain.c_str())};
}

// 3. Every attention matrix is row-stochastic, over many random passes.
Outcome check_attention_rows() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.num_nodes = 5;
    cfg.num_blocks = 2;
    cfg.channels = 6;
    cfg.embed_dim = 3;
    cfg.attn_dim = 6;
    cfg.skip_channels = 8;
    cfg.past_steps = 2;
    cfg.future_steps = 2;
    cfg.dilations = ModelConfig::solve_dilations(2, 2, 2, 2);

    long rows = 0;
    double worst = 0.0;
    for (int pass = 0; pass < 100; ++pass) {
        Rng rng(1000 + pass);
        const ModelParams params = ModelParams::init(cfg, rng);
        const WindowSample sample = random_sample(cfg, rng);
        ForwardTrace trace;
        model_forward(sample, params, cfg, &trace);
        for (const BlockTrace& block : trace.blocks)
            for (const Tensor& alpha : block.attention)
                for (int i = 0; i < cfg.num_nodes; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < cfg.num_nodes; ++j) sum += alpha.at({i, j});
                    worst = std::max(worst, std::abs(sum - 1.0));
                    ++rows;
                }
    }
    const double secs = elapsed(t0);
    return {worst < 1e-8 && secs < 10.0,
            fmt("%ld rows over 100 passes, worst |sum-1| = %.2e, %.1f s (limit 10)", rows, worst,
                secs)};
}

// 4. Hidden entries cannot reach the output: poisoning them at the dataset
// level leaves every model output bitwise unchanged.
Outcome check_leak_freedom() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.num_nodes = 6;
    cfg.num_blocks = 2;
    cfg.channels = 8;
    cfg.embed_dim = 3;
    cfg.attn_dim = 8;
    cfg.skip_channels = 8;
    cfg.past_steps = 2;
    cfg.future_steps = 2;
    cfg.dilations = ModelConfig::solve_dilations(2, 2, 2, 2);

    Rng rng(21);
    const ModelParams params = ModelParams::init(cfg, rng);

    const auto outputs_with_sentinel = [&](double sentinel) {
        STDataset ds = generate_synthetic(6, 80, 3);
        const MaskGrid artificial = generate_mask(ds, {0.3, 4, MaskMode::Random});
        if (sentinel != 0.0)
            for (int t = 0; t < ds.num_steps(); ++t)
                for (int n = 0; n < ds.num_nodes(); ++n)
                    if (artificial.at(t, n)) ds.values.at(t, n) = sentinel;
        const SplitRanges splits = make_splits(ds.num_steps());
        const MaskGrid visible = visibility_mask(ds, artificial);
        const Normalizer norm = fit_normalizer(ds, splits.train, visible);
        const WindowBatch windows = make_windows(ds, artificial, norm, cfg.window_config(),
                                                 {0, ds.num_steps()}, WindowMode::EvalMasked);
        std::vector<Tensor> outs;
        for (std::size_t i = 0; i < windows.samples.size(); i += 7)
            outs.push_back(model_forward(windows.samples[i], params, cfg));
        return outs;
    };

    const std::vector<Tensor> clean = outputs_with_sentinel(0.0);
    const std::vector<Tensor> hot = outputs_with_sentinel(1e9);
    const std::vector<Tensor> cold = outputs_with_sentinel(-1e9);
    bool ok = clean.size() == hot.size() && clean.size() == cold.size() && !clean.empty();
    for (std::size_t i = 0; ok && i < clean.size(); ++i)
        ok = bitwise_equal(clean[i], hot[i]) && bitwise_equal(clean[i], cold[i]);
    const double secs = elapsed(t0);
    return {ok && secs < 10.0,
            fmt("%zu windows bitwise identical under sentinels 0 / 1e9 / -1e9, %.1f s (limit 10)",
                clean.size(), secs)};
}

// Re-encodes a training window under a symmetry of the synthetic generator.
// The ring process is invariant under node rotation (the seasonal wave's
// phase offset per node, 2π/N, matches a whole number of time steps, so a
// rotation is a time shift of the same process), and under time-reversal
// composed with node-reflection and a sign flip (the transition matrix is
// symmetric and the noise isotropic, so the reversed process has the same
// law; reflection and negation restore the travelling wave). Values are
// mapped through raw space so each node position keeps its own normalizer
// statistics; hidden entries stay zero-encoded.
WindowSample symmetry_variant(const WindowSample& s, int rot, bool reversed,
                              const Normalizer& norm, int num_nodes, int window) {
    WindowSample out;
    out.target_index = s.target_index;
    out.eval_count = s.eval_count;
    const int N = num_nodes, W = window;
    std::vector<double> x(static_cast<std::size_t>(N) * W, 0.0);
    std::vector<double> m(static_cast<std::size_t>(N) * W, 0.0);
    std::vector<double> xt(static_cast<std::size_t>(N), 0.0);
    std::vector<double> ev(static_cast<std::size_t>(N), 0.0);
    const double* sx = s.x_window.data();
    const double* sm = s.m_window.data();
    for (int n = 0; n < N; ++n) {
        int ns = (n - rot + 8 * N) % N;
        if (reversed) ns = (N - ns) % N;
        const double sign = reversed ? -1.0 : 1.0;
        const double scale = sign * norm.std_dev[ns] / norm.std_dev[n];
        const double shift = (sign * norm.mean[ns] - norm.mean[n]) / norm.std_dev[n];
        for (int w = 0; w < W; ++w) {
            const int ws = reversed ? (W - 1 - w) : w;
            const double mv = sm[ns * W + ws];
            m[static_cast<std::size_t>(n) * W + w] = mv;
            if (mv != 0.0) x[static_cast<std::size_t>(n) * W + w] = scale * sx[ns * W + ws] + shift;
        }
        ev[n] = s.eval_mask_t.at({ns});
        if (ev[n] != 0.0) xt[n] = scale * s.x_true_t.at({ns}) + shift;
    }
    out.x_window = Tensor::from_data({1, N, W}, std::move(x));
    out.m_window = Tensor::from_data({1, N, W}, std::move(m));
    out.x_true_t = Tensor::from_data({N}, std::move(xt));
    out.eval_mask_t = Tensor::from_data({N}, std::move(ev));
    return out;
}

// 5 + 6. Two experiments on one synthetic instance (8 nodes, 512 steps,
// 20% missing). Criterion 5 is the overfit check: the plain training
// pipeline must drive the masked training MSE under 1e-2 within a fixed
// step budget. Criterion 6 is the generalization check: a model trained
// with augmentation must beat linear interpolation on held-out test
// entries at 20% missingness and stay at least even at 60%.
std::pair<Outcome, Outcome> run_benchmark() {
    const STDataset ds = generate_synthetic(8, 512, 7);
    const MaskSpec mask_spec{0.2, 7, MaskMode::Random};
    const MaskGrid artificial = generate_mask(ds, mask_spec);
    const SplitRanges splits = make_splits(ds.num_steps());
    const MaskGrid visible = visibility_mask(ds, artificial);
    const Normalizer norm = fit_normalizer(ds, splits.train, visible);

    ModelConfig cfg;
    cfg.num_nodes = 8;
    cfg.num_blocks = 4;
    cfg.channels = 16;
    cfg.embed_dim = 6;
    cfg.attn_dim = 16;
    cfg.skip_channels = 32;
    cfg.past_steps = 6;
    cfg.future_steps = 6;
    cfg.dilations = ModelConfig::solve_dilations(4, cfg.kernel_size, 6, 6);
    cfg.validate();

    // --- Criterion 5: overfit experiment on the plain pipeline. ---
    const auto t5 = Clock::now();
    TrainData plain;
    plain.train = make_windows(ds, artificial, norm, cfg.window_config(), splits.train,
                               WindowMode::EvalMasked)
                      .samples;
    plain.val =
        make_windows(ds, artificial, norm, cfg.window_config(), splits.val, WindowMode::EvalMasked)
            .samples;

    Rng rng5(7);
    ModelParams overfit_params = ModelParams::init(cfg, rng5);
    TrainConfig overfit_cfg;
    overfit_cfg.learning_rate = 2e-3;
    overfit_cfg.batch_size = 32;
    overfit_cfg.max_epochs = 1000000;
    overfit_cfg.patience = 1000000;
    overfit_cfg.seed = 7;
    overfit_cfg.max_steps = 2000;
    const TrainResult overfit_run = train(overfit_params, cfg, plain, overfit_cfg);

    double min_mse = std::numeric_limits<double>::infinity();
    int min_epoch = 0;
    for (const EpochStats& e : overfit_run.history)
        if (e.train_loss < min_mse) {
            min_mse = e.train_loss;
            min_epoch = e.epoch;
        }
    const double overfit_secs = elapsed(t5);
    Outcome overfit{min_mse < 1e-2 && overfit_run.total_steps <= 2000 && overfit_secs < 600.0,
                    fmt("training MSE %.2e at epoch %d (%lld steps, cap 2000), %.0f s (limit 600)",
                        min_mse, min_epoch, static_cast<long long>(overfit_run.total_steps),
                        overfit_secs)};

    // --- Criterion 6: generalization experiment. ---
    // Training windows are augmented self-supervised style: besides the
    // benchmark mask, fresh artificial masks at mixed rates are drawn over
    // the training split (so every sparsity regime the model is scored
    // under appears in training), and each window is expanded through the
    // generator's exact symmetry group. Validation and test rows are never
    // supervised. The model trains with the residual head: it starts from
    // the interpolation anchor's accuracy and learns the correction.
    const auto t6 = Clock::now();
    ModelConfig cfg6 = cfg;
    cfg6.residual_head = true;
    std::vector<WindowSample> base = make_windows(ds, artificial, norm, cfg.window_config(),
                                                  splits.train, WindowMode::EvalMasked)
                                         .samples;
    const double aug_rates[] = {0.2, 0.3, 0.4, 0.5, 0.6};
    for (int k = 0; k < 5; ++k) {
        const MaskGrid extra = generate_mask(
            ds, {aug_rates[k % 5], 7000 + static_cast<std::uint64_t>(k), MaskMode::Random});
        const WindowBatch batch = make_windows(ds, extra, norm, cfg.window_config(), splits.train,
                                               WindowMode::EvalMasked);
        base.insert(base.end(), batch.samples.begin(), batch.samples.end());
    }
    TrainData data;
    data.train.reserve(base.size() * 16);
    for (const WindowSample& s : base)
        for (int rot = 0; rot < 8; ++rot) {
            data.train.push_back(symmetry_variant(s, rot, false, norm, 8, cfg.window_length()));
            data.train.push_back(symmetry_variant(s, rot, true, norm, 8, cfg.window_length()));
        }
    data.val =
        make_windows(ds, artificial, norm, cfg.window_config(), splits.val, WindowMode::EvalMasked)
            .samples;
    const WindowBatch sparse_val = make_windows(ds, generate_mask(ds, {0.6, 7700, MaskMode::Random}),
                                                norm, cfg.window_config(), splits.val,
                                                WindowMode::EvalMasked);
    data.val.insert(data.val.end(), sparse_val.samples.begin(), sparse_val.samples.end());

    Rng rng6(7);
    ModelParams params = ModelParams::init(cfg6, rng6);

    struct Stage {
        double lr;
        std::int64_t max_steps;
        std::uint64_t seed;
    };
    const Stage stages[] = {
        {2e-3, 3000, 8},
        {7e-4, 2000, 9},
        {2.5e-4, 1500, 10},
        {1e-4, 1000, 11},
    };
    std::int64_t total_steps = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (const Stage& st : stages) {
        TrainConfig tc;
        tc.learning_rate = st.lr;
        tc.batch_size = 64;
        tc.max_epochs = 1000000;
        tc.patience = 1000000;
        tc.seed = st.seed;
        tc.max_steps = st.max_steps;
        const TrainResult r = train(params, cfg6, data, tc);
        total_steps += r.total_steps;
        best_val = std::min(best_val, r.best_val_loss);
    }

    Checkpoint cp;
    cp.config = cfg6;
    cp.params = params;
    cp.normalizer = norm;
    cp.train_step = total_steps;

    const MetricsReport report =
        evaluate(ds, {0.2, 0.6}, 7, {BaselineKind::LinearInterpolation}, &cp);
    const MethodMetrics* model = nullptr;
    const MethodMetrics* interp = nullptr;
    for (const MethodMetrics& m : report.methods) {
        if (m.method == "model") model = &m;
        if (m.method == "linear_interpolation") interp = &m;
    }
    const double secs = elapsed(t6);
    if (model == nullptr || interp == nullptr)
        return {overfit, {false, "report is missing a method row"}};

    const double m02 = model->per_rate[0].mae, i02 = interp->per_rate[0].mae;
    const double m06 = model->per_rate[1].mae, i06 = interp->per_rate[1].mae;
    Outcome beat{m02 <= 0.9 * i02 && m06 <= 1.0 * i06 && secs < 900.0,
                 fmt("p=0.2 MAE %.4f vs interp %.4f (ratio %.2f, need <= 0.90); "
                     "p=0.6 MAE %.4f vs %.4f (ratio %.2f, need <= 1.00); "
                     "%lld steps, best val MSE %.2e; %.0f s (limit 900)",
                     m02, i02, m02 / i02, m06, i06, m06 / i06,
                     static_cast<long long>(cp.train_step), best_val, secs)};
    return {overfit, beat};
}

// 7. Realized mask fraction tracks the requested rate.
Outcome check_mask_statistics() {
    const auto t0 = Clock::now();
    STDataset ds;
    ds.values = Matrix(400, 300, 1.0);
    ds.native_mask = MaskGrid(400, 300, 1);
    const long observed = 400L * 300L;

    bool ok = observed >= 100000;
    std::string detail;
    const double rates[] = {0.2, 0.4, 0.6};
    for (int i = 0; i < 3; ++i) {
        const MaskGrid mask = generate_mask(ds, {rates[i], 11 + static_cast<std::uint64_t>(i),
                                                 MaskMode::Random});
        long hidden = 0;
        for (std::uint8_t b : mask.cells) hidden += b;
        const double frac = static_cast<double>(hidden) / static_cast<double>(observed);
        ok = ok && std::abs(frac - rates[i]) <= 0.005;
        detail += fmt("%sp=%.1f -> %.4f", i ? "; " : "", rates[i], frac);
    }
    const double secs = elapsed(t0);
    return {ok && secs < 5.0, detail + fmt(" over %ld entries (tolerance 0.005)", observed)};
}

// 8. Identical seeds reproduce the first training losses and the mask.
Outcome check_determinism() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.num_nodes = 4;
    cfg.num_blocks = 2;
    cfg.channels = 6;
    cfg.embed_dim = 3;
    cfg.attn_dim = 6;
    cfg.skip_channels = 8;
    cfg.past_steps = 2;
    cfg.future_steps = 2;
    cfg.dilations = ModelConfig::solve_dilations(2, 2, 2, 2);

    const auto run = [&] {
        const STDataset ds = generate_synthetic(4, 160, 5);
        const MaskGrid artificial = generate_mask(ds, {0.3, 6, MaskMode::Random});
        const SplitRanges splits = make_splits(ds.num_steps());
        const MaskGrid visible = visibility_mask(ds, artificial);
        const Normalizer norm = fit_normalizer(ds, splits.train, visible);
        TrainData data;
        data.train = make_windows(ds, artificial, norm, cfg.window_config(), splits.train,
                                  WindowMode::EvalMasked)
                         .samples;
        Rng rng(100);
        ModelParams params = ModelParams::init(cfg, rng);
        TrainConfig tc;
        tc.learning_rate = 1e-3;
        tc.batch_size = 16;
        tc.max_epochs = 4;
        tc.seed = 200;
        return train(params, cfg, data, tc).step_losses;
    };
    const std::vector<double> a = run();
    const std::vector<double> b = run();

    bool ok = a.size() == b.size() && a.size() >= 10;
    double worst = 0.0;
    for (std::size_t i = 0; ok && i < 10; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    ok = ok && worst <= 1e-12;

    const STDataset ds = generate_synthetic(4, 160, 5);
    const MaskGrid m1 = generate_mask(ds, {0.3, 6, MaskMode::Random});
    const MaskGrid m2 = generate_mask(ds, {0.3, 6, MaskMode::Random});
    ok = ok && m1.cells == m2.cells;

    const double secs = elapsed(t0);
    return {ok && secs < 60.0,
            fmt("first 10 of %zu losses agree within %.1e; mask bitwise stable; %.1f s (limit 60)",
                a.size(), worst, secs)};
}

// 9. Metric identities: the worked two-point example, and RMSE >= MAE on a
// full generated report.
Outcome check_metric_identities() {
    const auto t0 = Clock::now();
    const MetricValues two = metrics({2.0, 4.0}, {1.0, 2.0}, {1, 1});
    bool ok = two.mae == 1.5 && two.rmse == std::sqrt(2.5) && two.mape.has_value() &&
              *two.mape == 0.5 && two.n_eval == 2;

    const STDataset ds = generate_synthetic(6, 240, 17);
    const MetricsReport report = evaluate(
        ds, {0.2, 0.4, 0.6}, 3,
        {BaselineKind::LinearInterpolation, BaselineKind::HistoricalMean,
         BaselineKind::LastObservation},
        nullptr);
    long cells = 0;
    for (const MethodMetrics& m : report.methods)
        for (const MetricValues& v : m.per_rate) {
            ok = ok && v.rmse >= v.mae;
            ++cells;
        }
    const double secs = elapsed(t0);
    return {ok && secs < 1.0,
            fmt("two-point example exact (MAE 1.5, RMSE %.4f, MAPE 0.5); RMSE >= MAE on %ld "
                "report cells",
                std::sqrt(2.5), cells)};
}

// 10. Checkpoints restore parameters and forward outputs bitwise.
Outcome check_checkpoint_round_trip() {
    const auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.num_nodes = 4;
    cfg.num_blocks = 2;
    cfg.channels = 6;
    cfg.embed_dim = 3;
    cfg.attn_dim = 6;
    cfg.skip_channels = 8;
    cfg.past_steps = 2;
    cfg.future_steps = 2;
    cfg.dilations = ModelConfig::solve_dilations(2, 2, 2, 2);

    Rng rng(9);
    Checkpoint cp;
    cp.config = cfg;
    cp.params = ModelParams::init(cfg, rng);
    cp.normalizer.mean = {1.0, -2.0, 0.25, 3.5};
    cp.normalizer.std_dev = {1.5, 2.0, 0.75, 1.0};
    cp.train_step = 123;

    const std::string path = "/tmp/stimpute_acceptance_ckpt.bin";
    save_checkpoint(path, cp);
    const Checkpoint back = load_checkpoint(path, 4);

    const std::vector<NamedTensor> orig = cp.params.named();
    const std::vector<NamedTensor> restored = back.params.named();
    bool ok = orig.size() == restored.size() && back.train_step == 123;
    long coords = 0;
    for (std::size_t i = 0; ok && i < orig.size(); ++i) {
        ok = orig[i].name == restored[i].name && bitwise_equal(orig[i].tensor, restored[i].tensor);
        coords += static_cast<long>(orig[i].tensor.size());
    }

    Rng sample_rng(11);
    const WindowSample sample = random_sample(cfg, sample_rng);
    ok = ok && bitwise_equal(model_forward(sample, cp.params, cfg),
                             model_forward(sample, back.params, cfg));
    const double secs = elapsed(t0);
    return {ok && secs < 10.0,
            fmt("%zu tensors / %ld coordinates and forward outputs bitwise equal, %.1f s "
                "(limit 10)",
                orig.size(), coords, secs)};
}

void report_line(int index, const char* label, const Outcome& outcome) {
    std::printf("[%s] criterion %2d: %s — %s\n", outcome.pass ? "PASS" : "FAIL", index, label,
                outcome.detail.c_str());
    std::fflush(stdout);
}

Outcome guarded(const std::function<Outcome()>& check) {
    try {
        return check();
    } catch (const std::exception& e) {
        return {false, fmt("unexpected exception: %s", e.what())};
    }
}

}  // namespace

int main() {
    int failures = 0;
    const auto record = [&](int index, const char* label, const Outcome& outcome) {
        report_line(index, label, outcome);
        if (!outcome.pass) ++failures;
    };

    record(1, "full-model gradient check (N=3, C=4, 2 blocks)", guarded(check_gradients));
    record(2, "temporal shape contract for the default config", guarded(check_shapes));
    record(3, "attention rows sum to 1 across 100 random passes", guarded(check_attention_rows));
    record(4, "masked entries cannot leak into the output", guarded(check_leak_freedom));

    std::pair<Outcome, Outcome> benchmark;
    try {
        benchmark = run_benchmark();
    } catch (const std::exception& e) {
        benchmark.first = benchmark.second = {false, fmt("unexpected exception: %s", e.what())};
    }
    record(5, "normalized training MSE < 1e-2 within 2000 steps", benchmark.first);
    record(6, "trained model beats linear interpolation held out", benchmark.second);

    record(7, "realized mask fraction matches the requested rate", guarded(check_mask_statistics));
    record(8, "seeded runs reproduce losses and masks", guarded(check_determinism));
    record(9, "metric identities hold (RMSE >= MAE, worked example)",
           guarded(check_metric_identities));
    record(10, "checkpoint round trip is bitwise faithful", guarded(check_checkpoint_round_trip));

    std::printf("acceptance: %d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
