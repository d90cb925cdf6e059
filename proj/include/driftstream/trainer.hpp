#pragma once

#include <cstdint>
#include <vector>

#include "driftstream/dgpa.hpp"

namespace driftstream {

/// Loss parts plus the distance from the nearest non-differentiable point
/// seen during the forward pass (relu/pool/|residual|/hinge kinks); the
/// finite-difference gradient tests reject draws that sit on a kink.
struct LossBreakdown {
    double mae = 0.0;
    double penalty = 0.0;  // pre-weighting
    double total = 0.0;
    bool no_pairs = false;
    double relu_margin = 1e300;
    double pool_margin = 1e300;
    double residual_margin = 1e300;
    double hinge_margin = 1e300;
};

/// Gradients with the same layout as the trainable parameters: the network
/// tensors plus the head output weights (trained jointly through the
/// Fourier features).
struct GradientSet {
    NetworkParams net;
    std::vector<double> beta;
};

GradientSet zero_gradients(const DgpaModel& model);

struct BatchOptions {
    double penalty_weight = 0.1;
    bool through_head = true;   // predict via beta . phi(std(h)); else h itself (scalar)
    bool training_mode = true;  // dropout active
};

/// Composite loss over a minibatch: MAE of the mean path plus the weighted
/// bi-Lipschitz penalty over sampled within-batch pairs. When `grads` is
/// non-null, exact reverse-mode gradients of the composite are accumulated
/// for every network tensor and the head weights. Dropout masks and pair
/// selection derive from `batch_seed` alone, so the loss is a deterministic
/// function of the parameters (the property the finite-difference oracle
/// needs) and per-sample work parallelizes without changing results.
LossBreakdown batch_loss(const DgpaModel& model, const std::vector<const WindowSample*>& batch,
                         const BatchOptions& options, std::uint64_t batch_seed,
                         GradientSet* grads = nullptr);

/// Flat views over the trainable parameters (network tensors then beta), in
/// the fixed order Adam state expects.
std::vector<ParamView> trainable_views(DgpaModel& model);
std::vector<GradView> gradient_views(const GradientSet& grads);
std::size_t trainable_size(const DgpaModel& model);

struct TrainOptions {
    int epochs = 1;
    int batch_size = 64;
};

/// One fine-tuning session: `epochs` shuffled passes over the windows in
/// minibatches, Adam updates after each batch. Returns the mean loss across
/// batches. Deterministic in (model, windows, session_seed).
LossBreakdown fine_tune_session(DgpaModel& model, AdamState& adam,
                                const std::vector<WindowSample>& windows, const TrainOptions& options,
                                std::uint64_t session_seed);

/// Mean-path predictions only (no variance solve); parallel over windows.
std::vector<double> predict_mean_batch(const DgpaModel& model, const std::vector<WindowSample>& windows);

double eval_mae(const DgpaModel& model, const std::vector<WindowSample>& windows);

/// Deterministic even-stride subsample down to at most `cap` elements.
std::vector<WindowSample> subsample_evenly(const std::vector<WindowSample>& windows, int cap);

struct PretrainOptions {
    int max_epochs = 100;
    int patience = 5;  // epochs without val improvement before stopping
    int batch_size = 64;
    int window_length = kDefaultWindowLength;
    int stride = 1;
    int head_max_windows = 20000;
    int calib_max_windows = 20000;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    std::vector<double> train_loss;  // per epoch (MAE + weighted penalty)
    std::vector<double> val_mae;     // per epoch
    int best_epoch = -1;
    bool early_stopped = false;
    int epochs_run = 0;
    double alpha = 1.0;
    bool calibrated = false;
};

/// Offline pretraining: epochs of fine-tuning with early stopping on
/// validation MAE (best-epoch weights restored), then standardizer freeze,
/// closed-form head refit, and calibration on the validation set. With
/// max_epochs == 0 the model is left untouched (untrained checkpoint).
PretrainResult pretrain(DgpaModel& model, const std::vector<ShotRecord>& train_shots,
                        const std::vector<ShotRecord>& val_shots, const PretrainOptions& options);

}  // namespace driftstream
