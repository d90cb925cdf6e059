#pragma once

#include <string>
#include <vector>

#include "driftstream/rng.hpp"
#include "driftstream/tensor.hpp"

namespace driftstream {

enum class LayerKind { kConv1d, kMaxPool1d, kRelu, kDropout, kDense };

/// One layer of the feature network: Conv1D blocks (conv/relu/maxpool)
/// followed by dense blocks (dense/relu/dropout).
struct LayerSpec {
    LayerKind kind{};
    int filters = 0;      // conv1d
    int kernel_size = 3;  // conv1d
    int stride = 1;       // conv1d
    int pool = 2;         // maxpool1d
    int pool_stride = 2;  // maxpool1d
    double rate = 0.05;   // dropout
    int units = 0;        // dense

    static LayerSpec conv1d(int filters, int kernel_size = 3, int stride = 1);
    static LayerSpec maxpool1d(int pool = 2, int pool_stride = 2);
    static LayerSpec relu();
    static LayerSpec dropout(double rate = 0.05);
    static LayerSpec dense(int units);
};

std::string to_string(LayerKind kind);

/// Throws ConfigError unless the list is non-empty, every parameter is in
/// range, and no conv/pool layer appears after the first dense layer.
void validate_specs(const std::vector<LayerSpec>& specs);

/// Shape the network produces for a given input shape ({T, C} for the conv
/// stage; dense layers flatten). Throws ConfigError when a layer cannot be
/// applied (e.g. conv window longer than its input).
std::vector<int> output_shape(const std::vector<LayerSpec>& specs, std::vector<int> input_shape);

/// Parameters for one layer. Conv1d: w has shape {filters, kernel, channels},
/// b {filters}. Dense: w {units, in}, b {units}. Other kinds hold nothing.
struct LayerParams {
    Tensor w, b;
};

struct NetworkParams {
    std::vector<LayerParams> layers;

    std::int64_t total_size() const;
    void fill(double value);
};

/// He-normal initialization (std sqrt(2/fan_in)), zero biases.
NetworkParams init_params(const std::vector<LayerSpec>& specs, const std::vector<int>& input_shape,
                          Rng& rng);

/// Everything the backward pass needs from one forward pass, plus distances
/// to the nearest non-differentiable point (used by the finite-difference
/// gradient tests to reject samples that sit on a kink).
struct ForwardTrace {
    std::vector<Tensor> inputs;                  // input seen by each layer
    std::vector<std::vector<int>> pool_argmax;   // per maxpool layer
    std::vector<std::vector<double>> drop_mask;  // per dropout layer, pre-scaled
    Tensor output;                               // h(x), rank 1
    double relu_margin = 1e300;                  // min |preactivation|
    double pool_margin = 1e300;                  // min gap between max and runner-up
};

/// Forward pass producing the final hidden vector h(x). Dropout fires only
/// when `training` is set; the masks are drawn from `rng` and recorded in the
/// trace for reuse in the backward pass. Throws ConfigError on an input that
/// does not match the first layer, NumericError (naming the layer) if any
/// intermediate value is non-finite.
Tensor network_forward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                       const Tensor& input, bool training, Rng& rng, ForwardTrace* trace = nullptr);

/// Inference-mode forward (dropout off, no rng needed).
Tensor network_forward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                       const Tensor& input);

/// Reverse pass: accumulates d(loss)/d(params) into `grads` (same layout as
/// `params`) given d(loss)/d(h). `grads` must be pre-sized; pass the trace
/// from the matching forward call.
void network_backward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                      const ForwardTrace& trace, const std::vector<double>& grad_output,
                      NetworkParams& grads);

/// Zero-filled gradient holder with the same layout as `params`.
NetworkParams zeros_like(const NetworkParams& params);

}  // namespace driftstream
