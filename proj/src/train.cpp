#include "stimpute/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include "stimpute/error.hpp"
#include "stimpute/ops.hpp"
#include "stimpute/rng.hpp"

namespace stimpute {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be finite and >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (patience <= 0) throw ConfigError("patience must be positive");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (final_learning_rate >= 0.0) {
        if (!std::isfinite(final_learning_rate))
            throw ConfigError("final_learning_rate must be finite");
        if (max_steps <= 0)
            throw ConfigError("final_learning_rate requires max_steps to fix the decay horizon");
    }
}

AdamOptimizer::AdamOptimizer(std::vector<NamedTensor> params, double learning_rate, double beta1,
                             double beta2, double epsilon)
    : learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    slots_.reserve(params.size());
    for (NamedTensor& p : params) {
        Slot slot;
        slot.param = p.tensor;
        slot.m.assign(p.tensor.size(), 0.0);
        slot.v.assign(p.tensor.size(), 0.0);
        slots_.push_back(std::move(slot));
    }
}

void AdamOptimizer::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (Slot& slot : slots_) {
        double* theta = slot.param.data();
        const double* g = slot.param.grad();
        for (std::size_t i = 0; i < slot.m.size(); ++i) {
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            theta[i] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + epsilon_);
        }
    }
}

void AdamOptimizer::zero_grad() const {
    for (const Slot& slot : slots_) slot.param.zero_grad();
}

double clip_global_norm(const std::vector<NamedTensor>& params, double max_norm) {
    double sum_sq = 0.0;
    for (const NamedTensor& p : params) {
        const double* g = p.tensor.grad();
        for (std::size_t i = 0; i < p.tensor.size(); ++i) sum_sq += g[i] * g[i];
    }
    const double norm = std::sqrt(sum_sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (const NamedTensor& p : params) {
            double* g = p.tensor.grad();
            for (std::size_t i = 0; i < p.tensor.size(); ++i) g[i] *= scale;
        }
    }
    return norm;
}

namespace {

/// Loss of one batch: sum of masked squared errors over all samples divided
/// by the total masked count, so sparsely-masked windows are not inflated.
/// Returns an untracked 0 when the batch carries no masked entries.
Tensor batch_loss(const std::vector<WindowSample>& samples, const std::vector<int>& order,
                  std::size_t begin, std::size_t end, const ModelParams& params,
                  const ModelConfig& model_config, int* total_count) {
    Tensor acc;  // sum of per-sample squared-error sums
    int count = 0;
    for (std::size_t i = begin; i < end; ++i) {
        const WindowSample& s = samples[static_cast<std::size_t>(order[i])];
        if (s.eval_count == 0) continue;
        Tensor out = model_forward(s, params, model_config);
        Tensor per_mean = masked_mse_loss(out, s.x_true_t, s.eval_mask_t);
        Tensor per_sum = ops::scale(per_mean, static_cast<double>(s.eval_count));
        acc = acc.defined() ? ops::add(acc, per_sum) : per_sum;
        count += s.eval_count;
    }
    if (total_count) *total_count = count;
    if (count == 0) return Tensor::scalar(0.0);
    return ops::scale(acc, 1.0 / static_cast<double>(count));
}

}  // namespace

double evaluate_loss(const ModelParams& params, const ModelConfig& model_config,
                     const std::vector<WindowSample>& samples) {
    double sum_sq = 0.0;
    long total = 0;
    for (const WindowSample& s : samples) {
        if (s.eval_count == 0) continue;
        Tensor out = model_forward(s, params, model_config);
        const double mean = masked_mse_loss(out, s.x_true_t, s.eval_mask_t).value();
        sum_sq += mean * s.eval_count;
        total += s.eval_count;
    }
    return total == 0 ? 0.0 : sum_sq / static_cast<double>(total);
}

TrainResult train(ModelParams& params, const ModelConfig& model_config, const TrainData& data,
                  const TrainConfig& config) {
    config.validate();
    model_config.validate();
    if (data.train.empty()) throw ArgumentError("train(): no training windows");

    const std::vector<NamedTensor> named = params.named();
    AdamOptimizer optimizer(named, config.learning_rate);
    Rng rng(config.seed);

    std::vector<int> order(data.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    TrainResult result;
    ModelParams best = params.clone();
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int stale_epochs = 0;
    const bool has_val = !data.val.empty();
    bool out_of_steps = false;

    for (int epoch = 1; epoch <= config.max_epochs && !out_of_steps; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        // seeded Fisher-Yates
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
            std::swap(order[i - 1], order[j]);
        }

        double epoch_sq = 0.0;
        long epoch_count = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
            const int batch_index = static_cast<int>(begin / config.batch_size);

            params.zero_grad();
            int count = 0;
            double loss_value = 0.0;
            {
                Tape tape;
                Tensor loss =
                    batch_loss(data.train, order, begin, end, params, model_config, &count);
                loss_value = loss.value();
                if (!std::isfinite(loss_value)) {
                    char msg[160];
                    std::snprintf(msg, sizeof(msg),
                                  "non-finite training loss at epoch %d, batch %d (lr=%g)", epoch,
                                  batch_index, config.learning_rate);
                    throw NumericalError(msg);
                }
                if (count == 0) continue;  // nothing to learn from
                tape.backward(loss);
            }
            clip_global_norm(named, config.grad_clip_norm);
            if (config.final_learning_rate >= 0.0 && config.max_steps > 1) {
                const double frac = std::min(
                    1.0, static_cast<double>(result.total_steps) /
                             static_cast<double>(config.max_steps - 1));
                optimizer.set_learning_rate(config.learning_rate +
                                            (config.final_learning_rate - config.learning_rate) *
                                                frac);
            }
            optimizer.step();

            result.step_losses.push_back(loss_value);
            ++result.total_steps;
            epoch_sq += loss_value * count;
            epoch_count += count;
            if (config.max_steps > 0 && result.total_steps >= config.max_steps) {
                out_of_steps = true;
                break;
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_count == 0 ? 0.0 : epoch_sq / static_cast<double>(epoch_count);
        stats.val_loss = has_val ? evaluate_loss(params, model_config, data.val) : stats.train_loss;
        stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            best_epoch = epoch;
            best.copy_values_from(params);
            stale_epochs = 0;
        } else if (++stale_epochs >= config.patience) {
            result.stopped_early = true;
            break;
        }
    }

    if (best_epoch > 0) params.copy_values_from(best);
    result.best_epoch = best_epoch;
    result.best_val_loss = best_val;
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw FormatError("cannot open history file for writing: " + path);
    std::fputs("epoch,train_loss,val_loss,seconds\n", f);
    for (const EpochStats& e : history)
        std::fprintf(f, "%d,%.17g,%.17g,%.3f\n", e.epoch, e.train_loss, e.val_loss, e.seconds);
    std::fclose(f);
}

}  // namespace stimpute
