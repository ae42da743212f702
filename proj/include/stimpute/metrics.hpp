#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stimpute/checkpoint.hpp"
#include "stimpute/data.hpp"

namespace stimpute {

/// Ground-truth entries with |value| at or below this are excluded from
/// MAPE, which is undefined (and explosive) near zero.
constexpr double kMapeEpsilon = 1e-3;

struct MetricValues {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> mape;  // empty when no entry exceeds kMapeEpsilon
    long n_eval = 0;
};

/// Error statistics over the entries with eval_mask 1. Throws ArgumentError
/// when the mask selects nothing; guarantees rmse >= mae on return.
MetricValues metrics(const std::vector<double>& x_true, const std::vector<double>& x_hat,
                     const std::vector<std::uint8_t>& eval_mask);

enum class BaselineKind { LinearInterpolation, HistoricalMean, LastObservation };

/// Stable identifier used in reports ("linear_interpolation", ...).
std::string baseline_name(BaselineKind kind);

/// Fills every non-visible entry of the matrix. Visible entries pass
/// through unchanged. A sensor with no visible entries at all falls back
/// to the dataset-wide mean of visible values.
Matrix baseline_impute(BaselineKind kind, const STDataset& dataset, const MaskGrid& visible);

/// One method's metrics across the evaluated missing rates.
struct MethodMetrics {
    std::string method;
    std::vector<MetricValues> per_rate;  // parallel to MetricsReport::rates
};

struct MetricsReport {
    std::vector<double> rates;
    std::uint64_t seed = 0;
    std::vector<MethodMetrics> methods;
};

/// Table-2-style protocol: per rate, regenerate the artificial mask with a
/// derived seed (seed xor rate index), impute the test split's masked
/// entries with each method, and score in original data units. All methods
/// share the same evaluation set per rate; when a model is given, that set
/// is restricted to targets whose window fits the series, and model
/// predictions are denormalized with the checkpoint's statistics.
MetricsReport evaluate(const STDataset& dataset, const std::vector<double>& rates,
                       std::uint64_t seed, const std::vector<BaselineKind>& baselines,
                       const Checkpoint* model = nullptr);

/// Aligned text table: one row per method; rate-major columns (per rate:
/// MAE, MAPE, RMSE). Undefined MAPE renders as "n/a".
std::string render_table(const MetricsReport& report);

void write_report_json(const std::string& path, const MetricsReport& report);

}  // namespace stimpute
