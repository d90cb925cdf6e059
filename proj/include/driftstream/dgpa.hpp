#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "driftstream/adam.hpp"
#include "driftstream/data.hpp"
#include "driftstream/layers.hpp"
#include "driftstream/losses.hpp"

namespace driftstream {

/// Frozen random Fourier projection approximating an RBF kernel:
/// phi(h) = sqrt(2/m) * cos(W h + b), with W rows ~ N(0, 1/length_scale^2)
/// and phases uniform on [0, 2*pi).
struct RffProjection {
    int feature_count = 512;  // m
    int input_dim = 0;        // D
    double length_scale = 1.0;
    std::vector<double> w;      // m x D
    std::vector<double> phase;  // m
};

RffProjection make_rff_projection(int feature_count, int input_dim, double length_scale, Rng& rng);

/// phi = sqrt(2/m) cos(W h + b). Throws std::invalid_argument on a dimension
/// mismatch.
std::vector<double> rff_features(const RffProjection& proj, std::span<const double> h);
void rff_features(const RffProjection& proj, std::span<const double> h, std::span<double> phi);

/// Affine feature standardization frozen at the end of pretraining; identity
/// until then. Gradients pass through (it is a constant diagonal map).
struct FeatureStandardizer {
    bool frozen = false;
    std::vector<double> mean, inv_std;
};

/// Linear output over the Fourier features plus a ridge precision matrix:
/// mean = beta . phi, epistemic variance = phi^T Lambda^{-1} phi with
/// Lambda = tau I + sum_j phi_j phi_j^T over the fitted samples.
struct GpHead {
    double tau = 1.0;
    std::vector<double> beta;         // m
    std::vector<double> lambda;       // m x m
    std::vector<double> chol_lambda;  // cached lower Cholesky factor of lambda
};

struct ModelConfig {
    std::vector<int> conv_filters{16, 8};
    std::vector<int> dense_units{32, 32};
    double dropout_rate = 0.05;
    int rff_feature_count = 512;
    double length_scale = 1.0;
    double ridge_tau = 1.0;
    double sigma_floor2 = 1e-4;
    double lipschitz_lower = kDefaultLipschitzLower;
    double lipschitz_upper = kDefaultLipschitzUpper;
    double penalty_weight = 0.1;
    int max_pairs = kDefaultMaxPairs;
    AdamConfig adam;
};

/// Layer list for a config: conv blocks (conv1d/relu/maxpool) then dense
/// blocks (dense/relu/dropout).
std::vector<LayerSpec> build_specs(const ModelConfig& config);

/// Feature network + RFF projection + GP head + calibration scale.
struct DgpaModel {
    ModelConfig cfg;
    std::vector<LayerSpec> specs;
    std::vector<int> input_shape;  // {window_length, channels}
    NetworkParams params;
    FeatureStandardizer standardizer;
    RffProjection proj;
    GpHead head;
    double alpha = 1.0;  // calibration scale, > 0
    std::uint64_t seed = 0;

    int hidden_dim() const { return proj.input_dim; }
};

DgpaModel make_model(const ModelConfig& config, int window_length, int channels, std::uint64_t seed);

/// Deep independent copy; the clone and the original start bit-identical.
DgpaModel clone_model(const DgpaModel& model);

/// h(x): inference-mode network forward.
std::vector<double> hidden_features(const DgpaModel& model, const Tensor& window);

/// phi(standardize(h(x))): the feature vector seen by the GP head.
std::vector<double> model_features(const DgpaModel& model, const Tensor& window);

struct PredictOut {
    double mean = 0.0;
    double sigma = 0.0;      // alpha * sigma_raw
    double sigma_raw = 0.0;  // sqrt(phi^T Lambda^{-1} phi + sigma_floor^2)
};

/// Single-pass mean and uncertainty. Deterministic (dropout off). If the
/// cached Cholesky factor is stale or Lambda has drifted off SPD, the head is
/// re-regularized by adding tau I (throws NumericError if that fails too).
PredictOut predict(const DgpaModel& model, const Tensor& window);
PredictOut predict(DgpaModel& model, const Tensor& window);

/// Batched prediction, parallel over windows; bit-identical to a serial loop.
std::vector<PredictOut> predict_batch(const DgpaModel& model, const std::vector<WindowSample>& windows);

/// Full head recompute from the given samples: Lambda = tau I + Phi^T Phi and
/// beta = Lambda^{-1} Phi^T y (ridge regression with ridge tau). Features are
/// computed with the current network weights.
void update_head(DgpaModel& model, const std::vector<WindowSample>& samples);

/// phi^T Lambda^{-1} phi (the epistemic term only).
double epistemic_variance(const DgpaModel& model, std::span<const double> phi);

/// Fit the feature standardizer on the hidden vectors of `windows` and
/// freeze it. Until called, standardization is the identity.
void freeze_standardizer(DgpaModel& model, const std::vector<WindowSample>& windows);

/// Binary checkpoint: self-describing header plus raw little-endian doubles.
/// save -> load -> predict is bit-exact. Optionally embeds the input-channel
/// standardizer so a stream can be reproduced end to end from the file.
void save_checkpoint(const DgpaModel& model, const ChannelStandardizer* channel_stats,
                     const std::string& path);

struct Checkpoint {
    DgpaModel model;
    ChannelStandardizer channel_stats;  // valid=false when absent
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace driftstream
