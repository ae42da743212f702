#include "stimpute/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stimpute/error.hpp"
#include "stimpute/model.hpp"

namespace stimpute {

MetricValues metrics(const std::vector<double>& x_true, const std::vector<double>& x_hat,
                     const std::vector<std::uint8_t>& eval_mask) {
    if (x_true.size() != x_hat.size() || x_true.size() != eval_mask.size())
        throw DimensionError("metrics(): input vectors differ in length");

    double abs_sum = 0.0, sq_sum = 0.0, ratio_sum = 0.0;
    long count = 0, ratio_count = 0;
    for (std::size_t i = 0; i < x_true.size(); ++i) {
        if (!eval_mask[i]) continue;
        const double diff = x_hat[i] - x_true[i];
        abs_sum += std::abs(diff);
        sq_sum += diff * diff;
        ++count;
        if (std::abs(x_true[i]) > kMapeEpsilon) {
            ratio_sum += std::abs(diff) / std::abs(x_true[i]);
            ++ratio_count;
        }
    }
    if (count == 0) throw ArgumentError("metrics(): evaluation mask selects no entries");

    MetricValues m;
    m.n_eval = count;
    m.mae = abs_sum / static_cast<double>(count);
    m.rmse = std::sqrt(sq_sum / static_cast<double>(count));
    if (ratio_count > 0) m.mape = ratio_sum / static_cast<double>(ratio_count);
    if (m.rmse + 1e-12 < m.mae)
        throw NumericalError("metrics(): rmse < mae, which is impossible");
    return m;
}

std::string baseline_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::LinearInterpolation: return "linear_interpolation";
        case BaselineKind::HistoricalMean: return "historical_mean";
        case BaselineKind::LastObservation: return "last_observation";
    }
    throw ArgumentError("unknown baseline kind");
}

namespace {

double global_visible_mean(const STDataset& dataset, const MaskGrid& visible) {
    double sum = 0.0;
    long count = 0;
    for (int t = 0; t < dataset.num_steps(); ++t)
        for (int n = 0; n < dataset.num_nodes(); ++n)
            if (visible.at(t, n)) {
                sum += dataset.values.at(t, n);
                ++count;
            }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

void impute_linear(const STDataset& ds, const MaskGrid& visible, int n, double fallback,
                   Matrix& out) {
    const int steps = ds.num_steps();
    int prev = -1;  // last visible index seen
    for (int t = 0; t <= steps; ++t) {
        const bool vis = t < steps && visible.at(t, n);
        if (t < steps && !vis) continue;
        const int next = t;  // visible, or one past the end
        for (int h = prev + 1; h < next; ++h) {
            double value;
            if (prev >= 0 && next < steps) {
                const double w = static_cast<double>(h - prev) / static_cast<double>(next - prev);
                value = (1.0 - w) * ds.values.at(prev, n) + w * ds.values.at(next, n);
            } else if (prev >= 0) {
                value = ds.values.at(prev, n);  // constant tail
            } else if (next < steps) {
                value = ds.values.at(next, n);  // constant head
            } else {
                value = fallback;  // nothing visible at all
            }
            out.at(h, n) = value;
        }
        prev = next;
    }
}

void impute_historical_mean(const STDataset& ds, const MaskGrid& visible, int n, double fallback,
                            Matrix& out) {
    const int steps = ds.num_steps();
    const int per_day =
        ds.interval_minutes > 0 ? std::max(1, 1440 / ds.interval_minutes) : 1;
    std::vector<double> bucket_sum(static_cast<std::size_t>(per_day), 0.0);
    std::vector<long> bucket_count(static_cast<std::size_t>(per_day), 0);
    double sensor_sum = 0.0;
    long sensor_count = 0;
    for (int t = 0; t < steps; ++t)
        if (visible.at(t, n)) {
            bucket_sum[static_cast<std::size_t>(t % per_day)] += ds.values.at(t, n);
            ++bucket_count[static_cast<std::size_t>(t % per_day)];
            sensor_sum += ds.values.at(t, n);
            ++sensor_count;
        }
    const double sensor_mean = sensor_count > 0 ? sensor_sum / sensor_count : fallback;
    for (int t = 0; t < steps; ++t) {
        if (visible.at(t, n)) continue;
        const std::size_t b = static_cast<std::size_t>(t % per_day);
        out.at(t, n) = bucket_count[b] > 0 ? bucket_sum[b] / bucket_count[b] : sensor_mean;
    }
}

void impute_last_observation(const STDataset& ds, const MaskGrid& visible, int n, double fallback,
                             Matrix& out) {
    const int steps = ds.num_steps();
    int last = -1;
    for (int t = 0; t < steps; ++t) {
        if (visible.at(t, n)) {
            last = t;
            continue;
        }
        if (last >= 0) out.at(t, n) = ds.values.at(last, n);
    }
    // leading gap: backward fill from the first visible value
    int first = -1;
    for (int t = 0; t < steps; ++t)
        if (visible.at(t, n)) {
            first = t;
            break;
        }
    for (int t = 0; t < (first >= 0 ? first : steps); ++t)
        out.at(t, n) = first >= 0 ? ds.values.at(first, n) : fallback;
}

}  // namespace

Matrix baseline_impute(BaselineKind kind, const STDataset& dataset, const MaskGrid& visible) {
    if (visible.rows != dataset.num_steps() || visible.cols != dataset.num_nodes())
        throw DimensionError("baseline_impute(): mask shape does not match the dataset");
    Matrix out = dataset.values;
    const double fallback = global_visible_mean(dataset, visible);
    for (int n = 0; n < dataset.num_nodes(); ++n) {
        switch (kind) {
            case BaselineKind::LinearInterpolation:
                impute_linear(dataset, visible, n, fallback, out);
                break;
            case BaselineKind::HistoricalMean:
                impute_historical_mean(dataset, visible, n, fallback, out);
                break;
            case BaselineKind::LastObservation:
                impute_last_observation(dataset, visible, n, fallback, out);
                break;
        }
    }
    return out;
}

namespace {

/// Evaluation entries of one rate: artificially-masked test-split cells,
/// restricted to model-imputable targets when a model participates.
struct EvalSet {
    TimeRange targets;             // target steps considered
    std::vector<std::uint8_t> mask;  // [T x N] flattened, 1 = scored
    long count = 0;
};

EvalSet build_eval_set(const STDataset& dataset, const MaskGrid& artificial,
                       const Checkpoint* model) {
    const int steps = dataset.num_steps(), nodes = dataset.num_nodes();
    SplitRanges splits = make_splits(steps);
    EvalSet set;
    set.targets = splits.test;
    if (model) {
        set.targets.begin = std::max(set.targets.begin, model->config.past_steps);
        set.targets.end = std::min(set.targets.end, steps - model->config.future_steps);
    }
    set.mask.assign(static_cast<std::size_t>(steps) * nodes, 0);
    for (int t = set.targets.begin; t < set.targets.end; ++t)
        for (int n = 0; n < nodes; ++n)
            if (artificial.at(t, n) && dataset.native_mask.at(t, n)) {
                set.mask[static_cast<std::size_t>(t) * nodes + n] = 1;
                ++set.count;
            }
    return set;
}

/// Model predictions (original units) for every eval entry; positions not
/// covered stay at the baseline of x_true so they never distort metrics
/// (coverage is asserted by the caller via sample bookkeeping).
Matrix model_impute(const STDataset& dataset, const MaskGrid& artificial, const EvalSet& set,
                    const Checkpoint& model) {
    const int nodes = dataset.num_nodes();
    // the normalizer must round-trip original values before its statistics
    // are trusted for denormalization
    for (int t = set.targets.begin; t < set.targets.end; ++t)
        for (int n = 0; n < nodes; ++n)
            if (set.mask[static_cast<std::size_t>(t) * nodes + n]) {
                const double v = dataset.values.at(t, n);
                const double round_trip =
                    model.normalizer.denormalize(model.normalizer.normalize(v, n), n);
                if (std::abs(round_trip - v) > 1e-9)
                    throw NumericalError("normalization round trip exceeded 1e-9");
            }

    Matrix out = dataset.values;
    WindowBatch batch = make_windows(dataset, artificial, model.normalizer,
                                     model.config.window_config(), set.targets,
                                     WindowMode::EvalMasked);
    for (const WindowSample& sample : batch.samples) {
        Tensor pred = model_forward(sample, model.params, model.config);
        for (int n = 0; n < nodes; ++n)
            if (set.mask[static_cast<std::size_t>(sample.target_index) * nodes + n])
                out.at(sample.target_index, n) = model.normalizer.denormalize(pred.at({n}), n);
    }
    return out;
}

MetricValues score(const STDataset& dataset, const Matrix& imputed, const EvalSet& set) {
    return metrics(dataset.values.cells, imputed.cells, set.mask);
}

}  // namespace

MetricsReport evaluate(const STDataset& dataset, const std::vector<double>& rates,
                       std::uint64_t seed, const std::vector<BaselineKind>& baselines,
                       const Checkpoint* model) {
    if (rates.empty()) throw ArgumentError("evaluate(): no missing rates given");
    for (double rate : rates)
        if (!(rate > 0.0 && rate < 1.0))
            throw ArgumentError("evaluate(): missing rates must lie in (0, 1)");
    if (model && model->config.num_nodes != dataset.num_nodes())
        throw ConfigError("evaluate(): model was trained with a different node count");

    MetricsReport report;
    report.rates = rates;
    report.seed = seed;
    if (model) report.methods.push_back({"model", {}});
    for (BaselineKind kind : baselines) report.methods.push_back({baseline_name(kind), {}});

    for (std::size_t r = 0; r < rates.size(); ++r) {
        const std::uint64_t rate_seed = seed ^ static_cast<std::uint64_t>(r);
        MaskGrid artificial = generate_mask(dataset, {rates[r], rate_seed});
        MaskGrid visible = visibility_mask(dataset, artificial);
        EvalSet set = build_eval_set(dataset, artificial, model);
        if (set.count == 0)
            throw ArgumentError("evaluate(): no masked test entries at rate " +
                                std::to_string(rates[r]));

        std::size_t method = 0;
        if (model) {
            Matrix imputed = model_impute(dataset, artificial, set, *model);
            report.methods[method++].per_rate.push_back(score(dataset, imputed, set));
        }
        for (BaselineKind kind : baselines) {
            Matrix imputed = baseline_impute(kind, dataset, visible);
            report.methods[method++].per_rate.push_back(score(dataset, imputed, set));
        }
    }
    return report;
}

std::string render_table(const MetricsReport& report) {
    std::string out;
    char buf[64];

    std::snprintf(buf, sizeof(buf), "%-22s", "method");
    out += buf;
    for (double rate : report.rates) {
        char label[16];
        std::snprintf(label, sizeof(label), "%.0f%% MAE", rate * 100.0);
        std::snprintf(buf, sizeof(buf), " | %10s %9s %10s", label, "MAPE", "RMSE");
        out += buf;
    }
    out += '\n';
    out += std::string(22 + report.rates.size() * 34, '-');
    out += '\n';

    for (const MethodMetrics& method : report.methods) {
        std::snprintf(buf, sizeof(buf), "%-22s", method.method.c_str());
        out += buf;
        for (const MetricValues& m : method.per_rate) {
            if (m.mape)
                std::snprintf(buf, sizeof(buf), " | %10.4f %9.4f %10.4f", m.mae, *m.mape, m.rmse);
            else
                std::snprintf(buf, sizeof(buf), " | %10.4f %9s %10.4f", m.mae, "n/a", m.rmse);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_report_json(const std::string& path, const MetricsReport& report) {
    nlohmann::json methods = nlohmann::json::array();
    for (const MethodMetrics& method : report.methods) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < method.per_rate.size(); ++r) {
            const MetricValues& m = method.per_rate[r];
            nlohmann::json row = {{"rate", report.rates[r]},
                                  {"mae", m.mae},
                                  {"rmse", m.rmse},
                                  {"n_eval", m.n_eval}};
            row["mape"] = m.mape ? nlohmann::json(*m.mape) : nlohmann::json(nullptr);
            rows.push_back(std::move(row));
        }
        methods.push_back({{"method", method.method}, {"metrics", std::move(rows)}});
    }
    nlohmann::json j = {{"rates", report.rates}, {"seed", report.seed}, {"methods", methods}};

    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw FormatError("cannot open report for writing: " + path);
    const std::string text = j.dump(2);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size() &&
                    std::fputc('\n', f) != EOF && std::fclose(f) == 0;
    if (!ok) throw FormatError("failed writing report: " + path);
}

}  // namespace stimpute
