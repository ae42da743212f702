#include "stimpute/data.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "stimpute/error.hpp"
#include "stimpute/rng.hpp"

namespace stimpute {

namespace {

constexpr double kTwoPi = 6.283185307179586476;

// Civil-calendar <-> day-count conversions (proleptic Gregorian, days since
// 1970-01-01), via the standard era-based arithmetic.
long long days_from_civil(int y, unsigned m, unsigned d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

void civil_from_days(long long z, int& y, unsigned& m, unsigned& d) {
    z += 719468;
    const long long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long long yr = static_cast<long long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y = static_cast<int>(yr + (m <= 2));
}

bool parse_datetime_seconds(const std::string& s, long long& out) {
    int y = 0;
    unsigned mo = 0, dd = 0, hh = 0, mi = 0, ss = 0;
    char sep = 0;
    const int got = std::sscanf(s.c_str(), "%d-%u-%u%c%u:%u:%u", &y, &mo, &dd, &sep, &hh, &mi, &ss);
    if (got < 6) return false;
    if (sep != ' ' && sep != 'T') return false;
    if (mo < 1 || mo > 12 || dd < 1 || dd > 31 || hh > 23 || mi > 59 || ss > 59) return false;
    out = days_from_civil(y, mo, dd) * 86400LL + hh * 3600LL + mi * 60LL + ss;
    return true;
}

bool parse_integer_stamp(const std::string& s, long long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') return false;
    out = v * 60;  // integer stamps count minutes; keys are in seconds
    return true;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string at_line(const std::string& path, int row) {
    return path + ":" + std::to_string(row) + ": ";
}

}  // namespace

std::string format_timestamp(long long minutes) {
    const long long total = days_from_civil(2023, 1, 1) * 1440LL + minutes;
    long long days = total / 1440;
    long long rem = total % 1440;
    if (rem < 0) {
        rem += 1440;
        --days;
    }
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02llu:%02llu:00", y, m, d, rem / 60, rem % 60);
    return buf;
}

SplitRanges make_splits(int num_steps) {
    if (num_steps < 1) throw ArgumentError("make_splits: empty dataset");
    const int t1 = num_steps * 7 / 10;
    const int t2 = num_steps * 8 / 10;
    return {{0, t1}, {t1, t2}, {t2, num_steps}};
}

STDataset load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    strip_cr(line);
    const std::vector<std::string> header = split_fields(line);
    if (header.empty() || header[0] != "timestamp")
        throw FormatError(path + ": header must start with 'timestamp'");
    const int nodes = static_cast<int>(header.size()) - 1;
    if (nodes < 1) throw FormatError(path + ": no sensor columns");

    STDataset ds;
    ds.sensor_ids.assign(header.begin() + 1, header.end());

    std::vector<double> values;
    std::vector<std::uint8_t> native;
    std::vector<long long> keys;
    bool integer_stamps = false;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (static_cast<int>(fields.size()) != nodes + 1)
            throw FormatError(at_line(path, row) + "expected " + std::to_string(nodes + 1) +
                              " fields, got " + std::to_string(fields.size()));

        long long key = 0;
        const bool is_dt = parse_datetime_seconds(fields[0], key);
        const bool is_int = !is_dt && parse_integer_stamp(fields[0], key);
        if (!is_dt && !is_int)
            throw FormatError(at_line(path, row) + "unparseable timestamp '" + fields[0] + "'");
        if (keys.empty()) {
            integer_stamps = is_int;
        } else if (is_int != integer_stamps) {
            throw FormatError(at_line(path, row) + "mixed timestamp styles");
        }
        if (!keys.empty() && key <= keys.back())
            throw FormatError(at_line(path, row) + "timestamps must be strictly ascending");
        keys.push_back(key);
        ds.timestamps.push_back(fields[0]);

        for (int n = 1; n <= nodes; ++n) {
            const std::string& cell = fields[static_cast<std::size_t>(n)];
            if (cell.empty()) {
                values.push_back(0.0);
                native.push_back(0);
                continue;
            }
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
                throw FormatError(at_line(path, row) + "bad value '" + cell + "'");
            values.push_back(v);
            native.push_back(1);
        }
    }
    if (keys.empty()) throw FormatError(path + ": no data rows");

    const int steps = static_cast<int>(keys.size());
    ds.values = Matrix(steps, nodes);
    ds.values.cells = std::move(values);
    ds.native_mask = MaskGrid(steps, nodes);
    ds.native_mask.cells = std::move(native);
    if (steps >= 2) {
        const long long gap = keys[1] - keys[0];
        if (gap % 60 != 0)
            throw FormatError(path + ": timestamp spacing must be whole minutes");
        ds.interval_minutes = static_cast<int>(gap / 60);
    }
    return ds;
}

void save_matrix_csv(const std::string& path, const STDataset& dataset) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "timestamp";
    for (const std::string& id : dataset.sensor_ids) out << ',' << id;
    out << '\n';
    char buf[48];
    for (int t = 0; t < dataset.num_steps(); ++t) {
        out << dataset.timestamps[static_cast<std::size_t>(t)];
        for (int n = 0; n < dataset.num_nodes(); ++n) {
            out << ',';
            if (dataset.native_mask.at(t, n)) {
                std::snprintf(buf, sizeof(buf), "%.17g", dataset.values.at(t, n));
                out << buf;
            }
        }
        out << '\n';
    }
    if (!out) throw FormatError("write failed for " + path);
}

MaskGrid generate_mask(const STDataset& dataset, const MaskSpec& spec) {
    if (spec.missing_rate < 0.0 || spec.missing_rate > 1.0)
        throw ArgumentError("missing_rate must be in [0, 1], got " +
                            std::to_string(spec.missing_rate));
    Rng rng(spec.seed);
    MaskGrid mask(dataset.num_steps(), dataset.num_nodes());
    if (spec.mode == MaskMode::Random) {
        // one draw per cell regardless of native observability: the draw stream
        // stays aligned with (t, n), so the same seed hides the same positions
        // on datasets that differ only in their native gaps
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const double u = rng.uniform();
            if (dataset.native_mask.cells[i] && u < spec.missing_rate) mask.cells[i] = 1;
        }
        return mask;
    }

    // Block mode: per-sensor bursts of mean length block_length, placed until
    // the sensor's hidden count matches the requested rate exactly (up to
    // rounding over its observable cells)
    if (spec.block_length < 1) throw ArgumentError("block_length must be >= 1");
    const int steps = dataset.num_steps();
    for (int n = 0; n < dataset.num_nodes(); ++n) {
        long available = 0;
        for (int t = 0; t < steps; ++t)
            if (dataset.native_mask.at(t, n)) ++available;
        long want = std::lround(spec.missing_rate * static_cast<double>(available));
        long placed = 0;
        // each attempt hides at least one new cell unless the column is
        // saturated, so the guard only trips when no progress is possible
        for (long attempt = 0; placed < want && attempt < 64L * steps; ++attempt) {
            const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(steps)));
            const int len =
                1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(2 * spec.block_length - 1)));
            for (int t = start; t < std::min(steps, start + len) && placed < want; ++t) {
                if (dataset.native_mask.at(t, n) && !mask.at(t, n)) {
                    mask.at(t, n) = 1;
                    ++placed;
                }
            }
        }
    }
    return mask;
}

MaskGrid visibility_mask(const STDataset& dataset, const MaskGrid& artificial) {
    if (artificial.rows != dataset.num_steps() || artificial.cols != dataset.num_nodes())
        throw DimensionError("visibility_mask: mask shape does not match dataset");
    MaskGrid visible(artificial.rows, artificial.cols);
    for (std::size_t i = 0; i < visible.size(); ++i)
        visible.cells[i] = dataset.native_mask.cells[i] && !artificial.cells[i];
    return visible;
}

Normalizer fit_normalizer(const STDataset& dataset, TimeRange train_range,
                          const MaskGrid& visible) {
    const int nodes = dataset.num_nodes();
    if (train_range.length() < 1) throw ArgumentError("fit_normalizer: empty training range");
    if (train_range.begin < 0 || train_range.end > dataset.num_steps())
        throw ArgumentError("fit_normalizer: training range out of bounds");
    if (visible.rows != dataset.num_steps() || visible.cols != nodes)
        throw DimensionError("fit_normalizer: mask shape does not match dataset");

    Normalizer norm;
    norm.mean.assign(static_cast<std::size_t>(nodes), 0.0);
    norm.std_dev.assign(static_cast<std::size_t>(nodes), 1.0);
    for (int n = 0; n < nodes; ++n) {
        double sum = 0.0;
        long count = 0;
        for (int t = train_range.begin; t < train_range.end; ++t) {
            if (!visible.at(t, n)) continue;
            sum += dataset.values.at(t, n);
            ++count;
        }
        if (count == 0) continue;  // keep the (0, 1) fallback
        const double mu = sum / count;
        double ss = 0.0;
        for (int t = train_range.begin; t < train_range.end; ++t) {
            if (!visible.at(t, n)) continue;
            const double d = dataset.values.at(t, n) - mu;
            ss += d * d;
        }
        double sigma = std::sqrt(ss / count);
        if (sigma <= 1e-12 * std::max(1.0, std::abs(mu))) sigma = 1.0;
        norm.mean[static_cast<std::size_t>(n)] = mu;
        norm.std_dev[static_cast<std::size_t>(n)] = sigma;
    }
    return norm;
}

WindowBatch make_windows(const STDataset& dataset, const MaskGrid& artificial,
                         const Normalizer& normalizer, const WindowConfig& config,
                         TimeRange targets, WindowMode mode) {
    const int steps = dataset.num_steps();
    const int nodes = dataset.num_nodes();
    if (config.past_steps < 1 || config.future_steps < 1)
        throw ConfigError("window needs at least one past and one future step");
    if (steps < config.window_length())
        throw ConfigError("dataset has " + std::to_string(steps) + " steps, window needs " +
                          std::to_string(config.window_length()));
    if (targets.begin < 0 || targets.end > steps || targets.begin > targets.end)
        throw ArgumentError("make_windows: target range out of bounds");
    const MaskGrid visible = visibility_mask(dataset, artificial);
    if (static_cast<int>(normalizer.mean.size()) != nodes)
        throw DimensionError("make_windows: normalizer fitted for a different node count");

    const int window = config.window_length();
    WindowBatch batch;
    for (int t = targets.begin; t < targets.end; ++t) {
        bool candidate = false;
        for (int n = 0; n < nodes && !candidate; ++n) {
            if (mode == WindowMode::EvalMasked)
                candidate = dataset.native_mask.at(t, n) && artificial.at(t, n);
            else
                candidate = !visible.at(t, n);
        }
        if (!candidate) continue;
        if (t < config.past_steps || t >= steps - config.future_steps) {
            ++batch.skipped;
            continue;
        }

        WindowSample sample;
        sample.target_index = t;
        std::vector<double> xw(static_cast<std::size_t>(nodes) * window, 0.0);
        std::vector<double> mw(static_cast<std::size_t>(nodes) * window, 0.0);
        for (int n = 0; n < nodes; ++n) {
            for (int w = 0; w < window; ++w) {
                const int tau = t - config.past_steps + w;
                if (w == config.past_steps) continue;  // target slice stays hidden
                if (!visible.at(tau, n)) continue;
                const std::size_t i = static_cast<std::size_t>(n) * window + w;
                xw[i] = normalizer.normalize(dataset.values.at(tau, n), n);
                mw[i] = 1.0;
            }
        }
        sample.x_window = Tensor::from_data({1, nodes, window}, std::move(xw));
        sample.m_window = Tensor::from_data({1, nodes, window}, std::move(mw));

        std::vector<double> truth(static_cast<std::size_t>(nodes), 0.0);
        std::vector<double> eval(static_cast<std::size_t>(nodes), 0.0);
        for (int n = 0; n < nodes; ++n) {
            if (dataset.native_mask.at(t, n))
                truth[static_cast<std::size_t>(n)] = normalizer.normalize(dataset.values.at(t, n), n);
            if (dataset.native_mask.at(t, n) && artificial.at(t, n)) {
                eval[static_cast<std::size_t>(n)] = 1.0;
                ++sample.eval_count;
            }
        }
        sample.x_true_t = Tensor::from_data({nodes}, std::move(truth));
        sample.eval_mask_t = Tensor::from_data({nodes}, std::move(eval));
        batch.samples.push_back(std::move(sample));
    }
    return batch;
}

STDataset generate_synthetic(int n_nodes, int n_steps, std::uint64_t seed,
                             const SynthParams& params) {
    if (n_nodes < 2) throw ArgumentError("generate_synthetic: need at least 2 nodes");
    if (n_steps < 1) throw ArgumentError("generate_synthetic: need at least 1 step");
    if (params.season_period < 1) throw ArgumentError("generate_synthetic: period must be positive");
    if (params.noise_sd < 0.0) throw ArgumentError("generate_synthetic: negative noise");

    Rng rng(seed);
    Matrix vals(n_steps, n_nodes);
    for (int n = 0; n < n_nodes; ++n)
        vals.at(0, n) = params.constant_init ? *params.constant_init : rng.normal();

    for (int t = 0; t + 1 < n_steps; ++t) {
        for (int n = 0; n < n_nodes; ++n) {
            const double left = vals.at(t, (n + n_nodes - 1) % n_nodes);
            const double right = vals.at(t, (n + 1) % n_nodes);
            const double laplacian = left + right - 2.0 * vals.at(t, n);
            const double season =
                params.season_amplitude *
                std::sin(kTwoPi * t / params.season_period + kTwoPi * n / n_nodes);
            vals.at(t + 1, n) =
                vals.at(t, n) + params.diffusion * laplacian + season + rng.normal(0.0, params.noise_sd);
        }
    }

    STDataset ds;
    ds.values = std::move(vals);
    ds.native_mask = MaskGrid(n_steps, n_nodes, 1);
    ds.interval_minutes = 10;
    ds.sensor_ids.reserve(static_cast<std::size_t>(n_nodes));
    for (int n = 0; n < n_nodes; ++n) ds.sensor_ids.push_back("s" + std::to_string(n));
    ds.timestamps.reserve(static_cast<std::size_t>(n_steps));
    for (int t = 0; t < n_steps; ++t)
        ds.timestamps.push_back(format_timestamp(10LL * t));
    return ds;
}

void write_synthetic_metadata(const std::string& path, int n_nodes, int n_steps,
                              std::uint64_t seed, const SynthParams& params) {
    nlohmann::json j{
        {"generator", "ring-diffusion"},
        {"nodes", n_nodes},
        {"steps", n_steps},
        {"seed", seed},
        {"diffusion_beta", params.diffusion},
        {"season_amplitude", params.season_amplitude},
        {"season_period", params.season_period},
        {"noise_sd", params.noise_sd},
        {"interval_minutes", 10},
    };
    if (params.constant_init) j["constant_init"] = *params.constant_init;
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace stimpute
