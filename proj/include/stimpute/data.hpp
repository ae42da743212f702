#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stimpute/tensor.hpp"

namespace stimpute {

/// Dense row-major [rows x cols] grid; the workhorse for value matrices,
/// masks and provenance maps.
template <typename T>
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<T> cells;

    Grid() = default;
    Grid(int r, int c, T fill = T{})
        : rows(r), cols(c), cells(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    T& at(int r, int c) { return cells[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return cells.size(); }
};

using Matrix = Grid<double>;
using MaskGrid = Grid<std::uint8_t>;

/// A sensor x time panel: values[t][n] with per-entry native observability.
/// Entries with native_mask 0 were missing in the source; their value cells
/// are 0 and carry no information.
struct STDataset {
    Matrix values;                        // [T x N]
    MaskGrid native_mask;                 // [T x N], 1 = observed in the source
    std::vector<std::string> sensor_ids;  // length N
    std::vector<std::string> timestamps;  // length T, ascending
    int interval_minutes = 10;

    int num_steps() const { return values.rows; }
    int num_nodes() const { return values.cols; }
};

enum class MaskMode { Random, Block };

/// How to hide observed entries for training/evaluation. `Random` hides each
/// cell independently; `Block` hides contiguous per-sensor bursts (sensor
/// outages) whose lengths average `block_length`, matching the requested
/// overall rate per sensor up to rounding.
struct MaskSpec {
    double missing_rate = 0.2;  // p in [0, 1]
    std::uint64_t seed = 1;
    MaskMode mode = MaskMode::Random;
    int block_length = 4;  // mean burst length; Block mode only
};

/// Half-open index range [begin, end) along the time axis.
struct TimeRange {
    int begin = 0;
    int end = 0;
    int length() const { return end - begin; }
    bool contains(int t) const { return t >= begin && t < end; }
};

struct SplitRanges {
    TimeRange train, val, test;
};

/// Contiguous 70/10/20 split along time.
SplitRanges make_splits(int num_steps);

/// Per-sensor z-score statistics fitted on visible training entries.
struct Normalizer {
    std::vector<double> mean;     // length N
    std::vector<double> std_dev;  // length N, strictly positive

    double normalize(double value, int sensor) const {
        return (value - mean[sensor]) / std_dev[sensor];
    }
    double denormalize(double value, int sensor) const {
        return value * std_dev[sensor] + mean[sensor];
    }
};

struct WindowConfig {
    int past_steps = 6;    // T_p
    int future_steps = 6;  // T_f
    int window_length() const { return past_steps + future_steps + 1; }
};

/// One training/inference example centered on target step t. The window
/// covers [t - T_p, t + T_f]; the target slice is zero-filled with its mask
/// forced to 0 for every node, so the value being predicted never enters
/// the input.
struct WindowSample {
    Tensor x_window;     // [1 x N x (T_p+T_f+1)], normalized, 0 where hidden
    Tensor m_window;     // same shape in {0,1}; target slice all zeros
    int target_index = 0;
    Tensor x_true_t;     // [N], normalized truth at t (0 where natively missing)
    Tensor eval_mask_t;  // [N] in {0,1}: artificially hidden & natively observed
    int eval_count = 0;  // number of 1s in eval_mask_t
};

enum class WindowMode {
    EvalMasked,  // emit targets with >= 1 artificially-masked observed entry
    AnyHidden,   // emit targets with >= 1 hidden entry of any kind (imputation)
};

struct WindowBatch {
    std::vector<WindowSample> samples;
    int skipped = 0;  // candidate targets whose window exceeded the bounds
};

/// CSV with header `timestamp,<id>,...`; empty cells mark natively-missing
/// entries. Timestamps are `YYYY-MM-DD HH:MM[:SS]` (T separator also
/// accepted) or plain integers, strictly ascending.
STDataset load_matrix_csv(const std::string& path);

/// Inverse of load_matrix_csv; hidden entries become empty cells. Values are
/// written with 17 significant digits so the round trip is bit-exact.
void save_matrix_csv(const std::string& path, const STDataset& dataset);

/// Entrywise Bernoulli(p) over natively-observed entries, bit-reproducible
/// per seed across platforms. 1 = artificially hidden.
MaskGrid generate_mask(const STDataset& dataset, const MaskSpec& spec);

/// What the model may see: natively observed and not artificially hidden.
MaskGrid visibility_mask(const STDataset& dataset, const MaskGrid& artificial);

/// Per-sensor z-score statistics over `visible` entries of the training
/// range. Sensors with no visible entries fall back to (mu=0, sigma=1),
/// zero-variance sensors to sigma=1.
Normalizer fit_normalizer(const STDataset& dataset, TimeRange train_range,
                          const MaskGrid& visible);

/// One sample per candidate target index in `targets`; candidates whose
/// window would cross the dataset bounds are skipped and counted.
WindowBatch make_windows(const STDataset& dataset, const MaskGrid& artificial,
                         const Normalizer& normalizer, const WindowConfig& config,
                         TimeRange targets, WindowMode mode);

/// Ring-graph diffusion with a seasonal term:
///   s[t+1][n] = s[t][n] + beta*(s[t][n-1] + s[t][n+1] - 2*s[t][n])
///               + A*sin(2*pi*t/P + phi_n) + noise,  phi_n = 2*pi*n/N
/// with wraparound neighbors. Initial state is standard normal unless
/// constant_init pins it (used to verify the diffusion fixed point).
struct SynthParams {
    double diffusion = 0.2;         // beta
    double season_amplitude = 1.0;  // A
    int season_period = 144;        // P
    double noise_sd = 0.05;
    std::optional<double> constant_init;
};

STDataset generate_synthetic(int n_nodes, int n_steps, std::uint64_t seed,
                             const SynthParams& params = {});

/// JSON sidecar recording the generator inputs next to a synthetic CSV.
void write_synthetic_metadata(const std::string& path, int n_nodes, int n_steps,
                              std::uint64_t seed, const SynthParams& params);

/// "YYYY-MM-DD HH:MM:SS" for a minute offset from the fixed synthetic epoch.
std::string format_timestamp(long long minutes);

}  // namespace stimpute
