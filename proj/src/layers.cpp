#include "driftstream/layers.hpp"

#include <algorithm>
#include <cmath>

#include "driftstream/errors.hpp"

namespace driftstream {

LayerSpec LayerSpec::conv1d(int filters, int kernel_size, int stride) {
    LayerSpec s;
    s.kind = LayerKind::kConv1d;
    s.filters = filters;
    s.kernel_size = kernel_size;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::maxpool1d(int pool, int pool_stride) {
    LayerSpec s;
    s.kind = LayerKind::kMaxPool1d;
    s.pool = pool;
    s.pool_stride = pool_stride;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::kRelu;
    return s;
}

LayerSpec LayerSpec::dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::kDropout;
    s.rate = rate;
    return s;
}

LayerSpec LayerSpec::dense(int units) {
    LayerSpec s;
    s.kind = LayerKind::kDense;
    s.units = units;
    return s;
}

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::kConv1d: return "conv1d";
        case LayerKind::kMaxPool1d: return "maxpool1d";
        case LayerKind::kRelu: return "relu";
        case LayerKind::kDropout: return "dropout";
        case LayerKind::kDense: return "dense";
    }
    return "?";
}

void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw ConfigError("layer list is empty");
    bool dense_seen = false;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::kConv1d:
                if (s.filters <= 0 || s.kernel_size <= 0 || s.stride <= 0)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " has non-positive parameters");
                if (dense_seen)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " appears after a dense layer");
                break;
            case LayerKind::kMaxPool1d:
                if (s.pool <= 0 || s.pool_stride <= 0)
                    throw ConfigError("maxpool1d layer " + std::to_string(i) + " has non-positive parameters");
                if (dense_seen)
                    throw ConfigError("maxpool1d layer " + std::to_string(i) + " appears after a dense layer");
                break;
            case LayerKind::kRelu:
                break;
            case LayerKind::kDropout:
                if (!(s.rate >= 0.0 && s.rate < 1.0))
                    throw ConfigError("dropout layer " + std::to_string(i) + " rate must be in [0,1)");
                break;
            case LayerKind::kDense:
                if (s.units <= 0)
                    throw ConfigError("dense layer " + std::to_string(i) + " needs positive units");
                dense_seen = true;
                break;
        }
    }
}

std::vector<int> output_shape(const std::vector<LayerSpec>& specs, std::vector<int> shape) {
    validate_specs(specs);
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::kConv1d: {
                if (shape.size() != 2)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " needs a (time, channels) input");
                int t = (shape[0] - s.kernel_size) / s.stride + 1;
                if (shape[0] < s.kernel_size || t <= 0)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " output would be empty");
                shape = {t, s.filters};
                break;
            }
            case LayerKind::kMaxPool1d: {
                if (shape.size() != 2)
                    throw ConfigError("maxpool1d layer " + std::to_string(i) + " needs a (time, channels) input");
                int t = (shape[0] - s.pool) / s.pool_stride + 1;
                if (shape[0] < s.pool || t <= 0)
                    throw ConfigError("maxpool1d layer " + std::to_string(i) + " output would be empty");
                shape = {t, shape[1]};
                break;
            }
            case LayerKind::kRelu:
            case LayerKind::kDropout:
                break;
            case LayerKind::kDense: {
                int in = static_cast<int>(Tensor::numel_of(shape));
                if (in <= 0) throw ConfigError("dense layer " + std::to_string(i) + " has empty input");
                shape = {s.units};
                break;
            }
        }
    }
    return {static_cast<int>(Tensor::numel_of(shape))};
}

std::int64_t NetworkParams::total_size() const {
    std::int64_t n = 0;
    for (const LayerParams& lp : layers) n += lp.w.numel() + lp.b.numel();
    return n;
}

void NetworkParams::fill(double value) {
    for (LayerParams& lp : layers) {
        std::fill(lp.w.v.begin(), lp.w.v.end(), value);
        std::fill(lp.b.v.begin(), lp.b.v.end(), value);
    }
}

NetworkParams init_params(const std::vector<LayerSpec>& specs, const std::vector<int>& input_shape,
                          Rng& rng) {
    validate_specs(specs);
    NetworkParams params;
    params.layers.resize(specs.size());
    std::vector<int> shape = input_shape;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::kConv1d: {
                if (shape.size() != 2)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " needs a (time, channels) input");
                int channels = shape[1];
                int fan_in = s.kernel_size * channels;
                double std = std::sqrt(2.0 / fan_in);
                Tensor w = Tensor::zeros({s.filters, s.kernel_size, channels});
                for (double& x : w.v) x = rng.normal(0.0, std);
                params.layers[i].w = std::move(w);
                params.layers[i].b = Tensor::zeros({s.filters});
                shape = {(shape[0] - s.kernel_size) / s.stride + 1, s.filters};
                break;
            }
            case LayerKind::kMaxPool1d:
                shape = {(shape[0] - s.pool) / s.pool_stride + 1, shape[1]};
                break;
            case LayerKind::kRelu:
            case LayerKind::kDropout:
                break;
            case LayerKind::kDense: {
                int in = static_cast<int>(Tensor::numel_of(shape));
                double std = std::sqrt(2.0 / in);
                Tensor w = Tensor::zeros({s.units, in});
                for (double& x : w.v) x = rng.normal(0.0, std);
                params.layers[i].w = std::move(w);
                params.layers[i].b = Tensor::zeros({s.units});
                shape = {s.units};
                break;
            }
        }
    }
    // Validates the whole chain (throws if some layer cannot be applied).
    output_shape(specs, input_shape);
    return params;
}

NetworkParams zeros_like(const NetworkParams& params) {
    NetworkParams g;
    g.layers.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        g.layers[i].w = Tensor::zeros(params.layers[i].w.shape);
        g.layers[i].b = Tensor::zeros(params.layers[i].b.shape);
    }
    return g;
}

namespace {

void check_finite(const Tensor& t, std::size_t layer, const char* where) {
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite values in ") + where + " at layer " +
                           std::to_string(layer));
    }
}

}  // namespace

Tensor network_forward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                       const Tensor& input, bool training, Rng& rng, ForwardTrace* trace) {
    if (params.layers.size() != specs.size())
        throw ConfigError("parameter list does not match layer list");
    if (trace) {
        trace->inputs.assign(specs.size(), Tensor{});
        trace->pool_argmax.assign(specs.size(), {});
        trace->drop_mask.assign(specs.size(), {});
        trace->relu_margin = 1e300;
        trace->pool_margin = 1e300;
    }

    Tensor cur = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        if (trace) trace->inputs[i] = cur;
        switch (s.kind) {
            case LayerKind::kConv1d: {
                if (cur.rank() != 2)
                    throw ConfigError("conv1d layer " + std::to_string(i) + " given rank-" +
                                      std::to_string(cur.rank()) + " input");
                int t_in = cur.dim(0), c_in = cur.dim(1);
                const Tensor& w = params.layers[i].w;
                if (w.dim(2) != c_in || cur.dim(0) < s.kernel_size)
                    throw ConfigError("input shape mismatch at conv1d layer " + std::to_string(i));
                int t_out = (t_in - s.kernel_size) / s.stride + 1;
                Tensor out = Tensor::zeros({t_out, s.filters});
                for (int t = 0; t < t_out; ++t) {
                    for (int f = 0; f < s.filters; ++f) {
                        double acc = params.layers[i].b.v[f];
                        for (int k = 0; k < s.kernel_size; ++k) {
                            const double* in_row = &cur.v[static_cast<std::size_t>(t * s.stride + k) * c_in];
                            const double* w_row =
                                &w.v[(static_cast<std::size_t>(f) * s.kernel_size + k) * c_in];
                            for (int c = 0; c < c_in; ++c) acc += w_row[c] * in_row[c];
                        }
                        out.at(t, f) = acc;
                    }
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::kMaxPool1d: {
                if (cur.rank() != 2)
                    throw ConfigError("maxpool1d layer " + std::to_string(i) + " given rank-" +
                                      std::to_string(cur.rank()) + " input");
                int t_in = cur.dim(0), c = cur.dim(1);
                if (t_in < s.pool)
                    throw ConfigError("input shape mismatch at maxpool1d layer " + std::to_string(i));
                int t_out = (t_in - s.pool) / s.pool_stride + 1;
                Tensor out = Tensor::zeros({t_out, c});
                std::vector<int> argmax(static_cast<std::size_t>(t_out) * c, 0);
                for (int t = 0; t < t_out; ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        double best = -1e300, second = -1e300;
                        int best_t = 0;
                        for (int k = 0; k < s.pool; ++k) {
                            double x = cur.at(t * s.pool_stride + k, ch);
                            if (x > best) {
                                second = best;
                                best = x;
                                best_t = t * s.pool_stride + k;
                            } else if (x > second) {
                                second = x;
                            }
                        }
                        out.at(t, ch) = best;
                        argmax[static_cast<std::size_t>(t) * c + ch] = best_t;
                        if (trace && s.pool > 1) trace->pool_margin = std::min(trace->pool_margin, best - second);
                    }
                }
                if (trace) trace->pool_argmax[i] = std::move(argmax);
                cur = std::move(out);
                break;
            }
            case LayerKind::kRelu: {
                Tensor out = cur;
                for (double& x : out.v) {
                    if (trace) trace->relu_margin = std::min(trace->relu_margin, std::abs(x));
                    x = x > 0.0 ? x : 0.0;
                }
                cur = std::move(out);
                break;
            }
            case LayerKind::kDropout: {
                if (training && s.rate > 0.0) {
                    double keep_scale = 1.0 / (1.0 - s.rate);
                    std::vector<double> mask(cur.v.size());
                    for (std::size_t k = 0; k < mask.size(); ++k)
                        mask[k] = rng.uniform() >= s.rate ? keep_scale : 0.0;
                    Tensor out = cur;
                    for (std::size_t k = 0; k < out.v.size(); ++k) out.v[k] *= mask[k];
                    if (trace) trace->drop_mask[i] = std::move(mask);
                    cur = std::move(out);
                }
                break;
            }
            case LayerKind::kDense: {
                const Tensor& w = params.layers[i].w;
                int in = static_cast<int>(cur.numel());
                if (w.dim(1) != in)
                    throw ConfigError("input shape mismatch at dense layer " + std::to_string(i));
                Tensor out = Tensor::zeros({s.units});
                for (int u = 0; u < s.units; ++u) {
                    double acc = params.layers[i].b.v[u];
                    const double* w_row = &w.v[static_cast<std::size_t>(u) * in];
                    for (int k = 0; k < in; ++k) acc += w_row[k] * cur.v[k];
                    out.v[u] = acc;
                }
                cur = std::move(out);
                break;
            }
        }
        check_finite(cur, i, "forward pass");
    }
    if (cur.rank() != 1) cur.shape = {static_cast<int>(cur.numel())};
    if (trace) trace->output = cur;
    return cur;
}

Tensor network_forward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                       const Tensor& input) {
    Rng unused(0);
    return network_forward(params, specs, input, false, unused, nullptr);
}

void network_backward(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                      const ForwardTrace& trace, const std::vector<double>& grad_output,
                      NetworkParams& grads) {
    if (grads.layers.size() != specs.size())
        throw ConfigError("gradient holder does not match layer list");
    std::vector<double> g = grad_output;
    for (std::size_t idx = specs.size(); idx-- > 0;) {
        const LayerSpec& s = specs[idx];
        const Tensor& in = trace.inputs[idx];
        switch (s.kind) {
            case LayerKind::kConv1d: {
                int t_in = in.dim(0), c_in = in.dim(1);
                int t_out = (t_in - s.kernel_size) / s.stride + 1;
                const Tensor& w = params.layers[idx].w;
                Tensor& gw = grads.layers[idx].w;
                Tensor& gb = grads.layers[idx].b;
                std::vector<double> gin(in.v.size(), 0.0);
                for (int t = 0; t < t_out; ++t) {
                    for (int f = 0; f < s.filters; ++f) {
                        double go = g[static_cast<std::size_t>(t) * s.filters + f];
                        gb.v[f] += go;
                        for (int k = 0; k < s.kernel_size; ++k) {
                            std::size_t in_off = static_cast<std::size_t>(t * s.stride + k) * c_in;
                            std::size_t w_off = (static_cast<std::size_t>(f) * s.kernel_size + k) * c_in;
                            for (int c = 0; c < c_in; ++c) {
                                gw.v[w_off + c] += go * in.v[in_off + c];
                                gin[in_off + c] += go * w.v[w_off + c];
                            }
                        }
                    }
                }
                g = std::move(gin);
                break;
            }
            case LayerKind::kMaxPool1d: {
                int c = in.dim(1);
                std::vector<double> gin(in.v.size(), 0.0);
                const std::vector<int>& argmax = trace.pool_argmax[idx];
                int t_out = static_cast<int>(argmax.size()) / c;
                for (int t = 0; t < t_out; ++t) {
                    for (int ch = 0; ch < c; ++ch) {
                        int src_t = argmax[static_cast<std::size_t>(t) * c + ch];
                        gin[static_cast<std::size_t>(src_t) * c + ch] +=
                            g[static_cast<std::size_t>(t) * c + ch];
                    }
                }
                g = std::move(gin);
                break;
            }
            case LayerKind::kRelu: {
                // Subgradient at 0 is 0.
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (!(in.v[k] > 0.0)) g[k] = 0.0;
                break;
            }
            case LayerKind::kDropout: {
                const std::vector<double>& mask = trace.drop_mask[idx];
                if (!mask.empty())
                    for (std::size_t k = 0; k < g.size(); ++k) g[k] *= mask[k];
                break;
            }
            case LayerKind::kDense: {
                int n_in = static_cast<int>(in.numel());
                const Tensor& w = params.layers[idx].w;
                Tensor& gw = grads.layers[idx].w;
                Tensor& gb = grads.layers[idx].b;
                std::vector<double> gin(static_cast<std::size_t>(n_in), 0.0);
                for (int u = 0; u < s.units; ++u) {
                    double go = g[u];
                    gb.v[u] += go;
                    const double* w_row = &w.v[static_cast<std::size_t>(u) * n_in];
                    double* gw_row = &gw.v[static_cast<std::size_t>(u) * n_in];
                    for (int k = 0; k < n_in; ++k) {
                        gw_row[k] += go * in.v[k];
                        gin[k] += go * w_row[k];
                    }
                }
                g = std::move(gin);
                break;
            }
        }
        for (double x : g) {
            if (!std::isfinite(x))
                throw NumericError("non-finite values in backward pass at layer " + std::to_string(idx));
        }
    }
}

}  // namespace driftstream
