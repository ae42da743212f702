#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stimpute/data.hpp"
#include "stimpute/model.hpp"
#include "stimpute/tensor.hpp"

namespace stimpute {

/// Optimization hyperparameters.
struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;  // windows per Adam step
    int max_epochs = 100;
    int patience = 10;            // epochs without val improvement before stopping
    double grad_clip_norm = 5.0;  // global L2 cap
    std::uint64_t seed = 1;
    std::int64_t max_steps = 0;  // optional hard cap on Adam steps; 0 = none

    // When >= 0, the learning rate decays linearly from `learning_rate` on the
    // first step to this value on step `max_steps` (which must then be set).
    // Negative keeps the learning rate constant.
    double final_learning_rate = -1.0;

    /// Throws ConfigError on nonpositive sizes/caps. A zero learning rate is
    /// legal (frozen optimizer, used as a control).
    void validate() const;
};

/// Bias-corrected Adam over a fixed set of parameter tensors. Gradients are
/// read from each tensor's own grad buffer; moments live here, one pair of
/// buffers per tensor.
class AdamOptimizer {
public:
    explicit AdamOptimizer(std::vector<NamedTensor> params, double learning_rate,
                           double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

    /// One update from the gradients currently stored on the parameters.
    void step();

    void zero_grad() const;
    std::int64_t step_count() const { return step_count_; }
    double learning_rate() const { return learning_rate_; }
    void set_learning_rate(double learning_rate) { learning_rate_ = learning_rate; }

private:
    struct Slot {
        Tensor param;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double learning_rate_, beta1_, beta2_, epsilon_;
    std::int64_t step_count_ = 0;
};

/// Scales every gradient by max_norm/norm when the global L2 norm exceeds
/// max_norm; returns the pre-clip norm.
double clip_global_norm(const std::vector<NamedTensor>& params, double max_norm);

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::vector<double> step_losses;  // per-batch training loss, in step order
    int best_epoch = 0;               // epoch whose parameters were kept
    double best_val_loss = 0.0;
    std::int64_t total_steps = 0;
    bool stopped_early = false;
};

/// Pre-windowed training and validation samples.
struct TrainData {
    std::vector<WindowSample> train;
    std::vector<WindowSample> val;
};

/// Masked MSE of the model over a set of windows, weighted by each window's
/// masked-entry count (no gradients; safe on a frozen model).
double evaluate_loss(const ModelParams& params, const ModelConfig& model_config,
                     const std::vector<WindowSample>& samples);

/// Minimizes masked MSE with Adam. Each epoch shuffles the training windows
/// (seeded), runs batches of `batch_size`, and scores the validation set;
/// the best-validation parameters are restored into `params` on return.
/// With no validation windows the train loss drives early stopping.
/// Throws NumericalError naming the epoch/batch/learning rate when a batch
/// loss turns non-finite.
TrainResult train(ModelParams& params, const ModelConfig& model_config, const TrainData& data,
                  const TrainConfig& config);

/// `epoch,train_loss,val_loss,seconds` rows; losses carry full precision.
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace stimpute
