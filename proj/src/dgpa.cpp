#include "driftstream/dgpa.hpp"

#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <stdexcept>

#include "driftstream/errors.hpp"
#include "driftstream/kernels.hpp"
#include "json.hpp"

namespace driftstream {

RffProjection make_rff_projection(int feature_count, int input_dim, double length_scale, Rng& rng) {
    if (feature_count < 1 || input_dim < 1 || !(length_scale > 0.0))
        throw ConfigError("rff projection needs m >= 1, D >= 1, length_scale > 0");
    RffProjection proj;
    proj.feature_count = feature_count;
    proj.input_dim = input_dim;
    proj.length_scale = length_scale;
    proj.w.resize(static_cast<std::size_t>(feature_count) * input_dim);
    proj.phase.resize(static_cast<std::size_t>(feature_count));
    for (double& x : proj.w) x = rng.normal(0.0, 1.0 / length_scale);
    for (double& x : proj.phase) x = rng.uniform(0.0, 6.283185307179586476925286766559);
    return proj;
}

void rff_features(const RffProjection& proj, std::span<const double> h, std::span<double> phi) {
    if (static_cast<int>(h.size()) != proj.input_dim)
        throw std::invalid_argument("rff_features: input has dim " + std::to_string(h.size()) +
                                    ", projection expects " + std::to_string(proj.input_dim));
    if (static_cast<int>(phi.size()) != proj.feature_count)
        throw std::invalid_argument("rff_features: output buffer size mismatch");
    const double scale = std::sqrt(2.0 / proj.feature_count);
    kern::serial::rff_batch(proj.w.data(), proj.phase.data(), scale, h.data(), phi.data(), 1,
                            proj.input_dim, proj.feature_count);
}

std::vector<double> rff_features(const RffProjection& proj, std::span<const double> h) {
    std::vector<double> phi(static_cast<std::size_t>(proj.feature_count));
    rff_features(proj, h, phi);
    return phi;
}

std::vector<LayerSpec> build_specs(const ModelConfig& config) {
    std::vector<LayerSpec> specs;
    for (int filters : config.conv_filters) {
        specs.push_back(LayerSpec::conv1d(filters));
        specs.push_back(LayerSpec::relu());
        specs.push_back(LayerSpec::maxpool1d());
    }
    for (int units : config.dense_units) {
        specs.push_back(LayerSpec::dense(units));
        specs.push_back(LayerSpec::relu());
        specs.push_back(LayerSpec::dropout(config.dropout_rate));
    }
    validate_specs(specs);
    return specs;
}

namespace {

/// (Re)factorize Lambda; on a failed factorization re-regularize by adding
/// tau I and retry.
void refresh_head_cache(GpHead& head, int m) {
    for (int attempt = 0; attempt < 3; ++attempt) {
        head.chol_lambda = head.lambda;
        if (kern::cholesky_inplace(head.chol_lambda.data(), m)) return;
        for (int i = 0; i < m; ++i) head.lambda[static_cast<std::size_t>(i) * m + i] += head.tau;
    }
    throw NumericError("precision matrix is not positive definite after re-regularization");
}

std::vector<double> standardize_features(const FeatureStandardizer& st, std::vector<double> h) {
    if (!st.frozen) return h;
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = (h[i] - st.mean[i]) * st.inv_std[i];
    return h;
}

}  // namespace

DgpaModel make_model(const ModelConfig& config, int window_length, int channels, std::uint64_t seed) {
    DgpaModel model;
    model.cfg = config;
    model.specs = build_specs(config);
    model.input_shape = {window_length, channels};
    model.seed = seed;

    auto out = output_shape(model.specs, model.input_shape);
    int hidden = out[0];

    Rng net_rng(mix_seed(seed, 0x10));
    model.params = init_params(model.specs, model.input_shape, net_rng);

    Rng proj_rng(mix_seed(seed, 0x20));
    model.proj = make_rff_projection(config.rff_feature_count, hidden, config.length_scale, proj_rng);

    model.standardizer.mean.assign(static_cast<std::size_t>(hidden), 0.0);
    model.standardizer.inv_std.assign(static_cast<std::size_t>(hidden), 1.0);

    int m = config.rff_feature_count;
    model.head.tau = config.ridge_tau;
    model.head.beta.assign(static_cast<std::size_t>(m), 0.0);
    model.head.lambda.assign(static_cast<std::size_t>(m) * m, 0.0);
    for (int i = 0; i < m; ++i) model.head.lambda[static_cast<std::size_t>(i) * m + i] = config.ridge_tau;
    refresh_head_cache(model.head, m);
    return model;
}

DgpaModel clone_model(const DgpaModel& model) { return model; }

std::vector<double> hidden_features(const DgpaModel& model, const Tensor& window) {
    return network_forward(model.params, model.specs, window).v;
}

std::vector<double> model_features(const DgpaModel& model, const Tensor& window) {
    return rff_features(model.proj,
                        standardize_features(model.standardizer, hidden_features(model, window)));
}

PredictOut predict(const DgpaModel& model, const Tensor& window) {
    std::vector<double> phi = model_features(model, window);
    const int m = model.proj.feature_count;
    PredictOut out;
    out.mean = dot(model.head.beta, phi);
    std::vector<double> work(static_cast<std::size_t>(m));
    double q = kern::quad_form_inv(model.head.chol_lambda.data(), phi.data(), work.data(), m);
    out.sigma_raw = std::sqrt(q + model.cfg.sigma_floor2);
    out.sigma = model.alpha * out.sigma_raw;
    if (!std::isfinite(out.mean) || !std::isfinite(out.sigma) || !(out.sigma > 0.0))
        throw NumericError("non-finite prediction");
    return out;
}

PredictOut predict(DgpaModel& model, const Tensor& window) {
    return predict(static_cast<const DgpaModel&>(model), window);
}

std::vector<PredictOut> predict_batch(const DgpaModel& model, const std::vector<WindowSample>& windows) {
    std::vector<PredictOut> out(windows.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(windows.size()); ++i) {
        try {
            out[static_cast<std::size_t>(i)] = predict(model, windows[static_cast<std::size_t>(i)].input);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

namespace {

/// n x m feature matrix for a set of windows (network forward, standardize,
/// Fourier features). Parallel over windows.
std::vector<double> feature_matrix(const DgpaModel& model, const std::vector<WindowSample>& windows) {
    const int d = model.hidden_dim();
    const int m = model.proj.feature_count;
    const auto n = static_cast<std::int64_t>(windows.size());
    std::vector<double> z(static_cast<std::size_t>(n) * d);
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            auto hi = standardize_features(model.standardizer,
                                           hidden_features(model, windows[static_cast<std::size_t>(i)].input));
            std::memcpy(&z[static_cast<std::size_t>(i) * d], hi.data(), sizeof(double) * hi.size());
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    std::vector<double> f(static_cast<std::size_t>(n) * m);
    kern::rff_batch(model.proj.w.data(), model.proj.phase.data(), std::sqrt(2.0 / m), z.data(),
                    f.data(), static_cast<int>(n), d, m);
    return f;
}

}  // namespace

void update_head(DgpaModel& model, const std::vector<WindowSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("update_head: empty sample set");
    const int m = model.proj.feature_count;
    const auto n = static_cast<int>(samples.size());
    std::vector<double> f = feature_matrix(model, samples);
    std::vector<double> y(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) y[i] = samples[i].target;

    model.head.lambda.assign(static_cast<std::size_t>(m) * m, 0.0);
    kern::gram(f.data(), model.head.lambda.data(), n, m);
    for (int i = 0; i < m; ++i) model.head.lambda[static_cast<std::size_t>(i) * m + i] += model.head.tau;
    refresh_head_cache(model.head, m);

    std::vector<double> rhs(static_cast<std::size_t>(m));
    kern::tgemv(f.data(), y.data(), rhs.data(), n, m);
    std::vector<double> tmp(static_cast<std::size_t>(m));
    kern::solve_lower(model.head.chol_lambda.data(), rhs.data(), tmp.data(), m);
    kern::solve_lower_transpose(model.head.chol_lambda.data(), tmp.data(), model.head.beta.data(), m);
    for (double b : model.head.beta)
        if (!std::isfinite(b)) throw NumericError("head refit produced non-finite weights");
}

double epistemic_variance(const DgpaModel& model, std::span<const double> phi) {
    const int m = model.proj.feature_count;
    if (static_cast<int>(phi.size()) != m)
        throw std::invalid_argument("epistemic_variance: feature size mismatch");
    std::vector<double> work(static_cast<std::size_t>(m));
    return kern::quad_form_inv(model.head.chol_lambda.data(), phi.data(), work.data(), m);
}

void freeze_standardizer(DgpaModel& model, const std::vector<WindowSample>& windows) {
    if (windows.empty()) throw std::invalid_argument("freeze_standardizer: empty window set");
    const int d = model.hidden_dim();
    const auto n = static_cast<std::int64_t>(windows.size());
    std::vector<double> h(static_cast<std::size_t>(n) * d);
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            auto hi = hidden_features(model, windows[static_cast<std::size_t>(i)].input);
            std::memcpy(&h[static_cast<std::size_t>(i) * d], hi.data(), sizeof(double) * hi.size());
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    std::vector<double> mean(static_cast<std::size_t>(d), 0.0), var(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) mean[static_cast<std::size_t>(k)] += h[static_cast<std::size_t>(i) * d + k];
    for (double& x : mean) x /= static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) {
            double dv = h[static_cast<std::size_t>(i) * d + k] - mean[static_cast<std::size_t>(k)];
            var[static_cast<std::size_t>(k)] += dv * dv;
        }
    model.standardizer.mean = std::move(mean);
    model.standardizer.inv_std.assign(static_cast<std::size_t>(d), 1.0);
    for (int k = 0; k < d; ++k) {
        double sd = std::sqrt(var[static_cast<std::size_t>(k)] / static_cast<double>(n));
        model.standardizer.inv_std[static_cast<std::size_t>(k)] = 1.0 / std::max(sd, 1e-8);
    }
    model.standardizer.frozen = true;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'S', 'C', 'K', 'P', 'T', '0', '1'};

nlohmann::json specs_to_json(const std::vector<LayerSpec>& specs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const LayerSpec& s : specs) {
        nlohmann::json j;
        j["kind"] = to_string(s.kind);
        switch (s.kind) {
            case LayerKind::kConv1d:
                j["filters"] = s.filters;
                j["kernel_size"] = s.kernel_size;
                j["stride"] = s.stride;
                break;
            case LayerKind::kMaxPool1d:
                j["pool"] = s.pool;
                j["pool_stride"] = s.pool_stride;
                break;
            case LayerKind::kDropout:
                j["rate"] = s.rate;
                break;
            case LayerKind::kDense:
                j["units"] = s.units;
                break;
            case LayerKind::kRelu:
                break;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<LayerSpec> specs_from_json(const nlohmann::json& arr) {
    std::vector<LayerSpec> specs;
    for (const auto& j : arr) {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "conv1d")
            specs.push_back(LayerSpec::conv1d(j.at("filters").get<int>(), j.at("kernel_size").get<int>(),
                                              j.at("stride").get<int>()));
        else if (kind == "maxpool1d")
            specs.push_back(LayerSpec::maxpool1d(j.at("pool").get<int>(), j.at("pool_stride").get<int>()));
        else if (kind == "relu")
            specs.push_back(LayerSpec::relu());
        else if (kind == "dropout")
            specs.push_back(LayerSpec::dropout(j.at("rate").get<double>()));
        else if (kind == "dense")
            specs.push_back(LayerSpec::dense(j.at("units").get<int>()));
        else
            throw DataError("checkpoint: unknown layer kind '" + kind + "'");
    }
    return specs;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n) {
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated payload");
}

}  // namespace

void save_checkpoint(const DgpaModel& model, const ChannelStandardizer* channel_stats,
                     const std::string& path) {
    nlohmann::json h;
    h["specs"] = specs_to_json(model.specs);
    h["input_shape"] = model.input_shape;
    h["conv_filters"] = model.cfg.conv_filters;
    h["dense_units"] = model.cfg.dense_units;
    h["dropout_rate"] = model.cfg.dropout_rate;
    h["rff_feature_count"] = model.cfg.rff_feature_count;
    h["length_scale"] = model.cfg.length_scale;
    h["ridge_tau"] = model.cfg.ridge_tau;
    h["sigma_floor2"] = model.cfg.sigma_floor2;
    h["lipschitz_lower"] = model.cfg.lipschitz_lower;
    h["lipschitz_upper"] = model.cfg.lipschitz_upper;
    h["penalty_weight"] = model.cfg.penalty_weight;
    h["max_pairs"] = model.cfg.max_pairs;
    h["learning_rate"] = model.cfg.adam.learning_rate;
    h["beta1"] = model.cfg.adam.beta1;
    h["beta2"] = model.cfg.adam.beta2;
    h["epsilon"] = model.cfg.adam.epsilon;
    h["alpha"] = model.alpha;
    h["seed"] = model.seed;
    h["standardizer_frozen"] = model.standardizer.frozen;
    h["hidden_dim"] = model.hidden_dim();
    h["has_channel_stats"] = channel_stats != nullptr && channel_stats->valid;
    if (channel_stats != nullptr && channel_stats->valid) {
        h["n_channels"] = static_cast<int>(channel_stats->in_mean.size());
        h["y_mean"] = channel_stats->y_mean;
        h["y_std"] = channel_stats->y_std;
    }
    std::string header = h.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    auto len = static_cast<std::uint64_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const LayerParams& lp : model.params.layers) {
        write_doubles(out, lp.w.v);
        write_doubles(out, lp.b.v);
    }
    write_doubles(out, model.standardizer.mean);
    write_doubles(out, model.standardizer.inv_std);
    write_doubles(out, model.proj.w);
    write_doubles(out, model.proj.phase);
    write_doubles(out, model.head.beta);
    write_doubles(out, model.head.lambda);
    if (channel_stats != nullptr && channel_stats->valid) {
        write_doubles(out, channel_stats->in_mean);
        write_doubles(out, channel_stats->in_std);
    }
    if (!out) throw DataError("write failed for checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("'" + path + "' is not a driftstream checkpoint");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header(len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint: truncated header");
    nlohmann::json h = nlohmann::json::parse(header, nullptr, false);
    if (h.is_discarded()) throw DataError("checkpoint: bad header JSON");

    Checkpoint ck;
    DgpaModel& model = ck.model;
    model.cfg.conv_filters = h.at("conv_filters").get<std::vector<int>>();
    model.cfg.dense_units = h.at("dense_units").get<std::vector<int>>();
    model.cfg.dropout_rate = h.at("dropout_rate").get<double>();
    model.cfg.rff_feature_count = h.at("rff_feature_count").get<int>();
    model.cfg.length_scale = h.at("length_scale").get<double>();
    model.cfg.ridge_tau = h.at("ridge_tau").get<double>();
    model.cfg.sigma_floor2 = h.at("sigma_floor2").get<double>();
    model.cfg.lipschitz_lower = h.at("lipschitz_lower").get<double>();
    model.cfg.lipschitz_upper = h.at("lipschitz_upper").get<double>();
    model.cfg.penalty_weight = h.at("penalty_weight").get<double>();
    model.cfg.max_pairs = h.at("max_pairs").get<int>();
    model.cfg.adam.learning_rate = h.at("learning_rate").get<double>();
    model.cfg.adam.beta1 = h.at("beta1").get<double>();
    model.cfg.adam.beta2 = h.at("beta2").get<double>();
    model.cfg.adam.epsilon = h.at("epsilon").get<double>();
    model.specs = specs_from_json(h.at("specs"));
    model.input_shape = h.at("input_shape").get<std::vector<int>>();
    model.alpha = h.at("alpha").get<double>();
    model.seed = h.at("seed").get<std::uint64_t>();

    // Allocate parameter tensors with the right shapes, then overwrite.
    Rng scratch(0);
    model.params = init_params(model.specs, model.input_shape, scratch);
    for (LayerParams& lp : model.params.layers) {
        read_doubles(in, lp.w.v, lp.w.v.size());
        read_doubles(in, lp.b.v, lp.b.v.size());
    }
    auto d = static_cast<std::size_t>(h.at("hidden_dim").get<int>());
    auto m = static_cast<std::size_t>(model.cfg.rff_feature_count);
    model.standardizer.frozen = h.at("standardizer_frozen").get<bool>();
    read_doubles(in, model.standardizer.mean, d);
    read_doubles(in, model.standardizer.inv_std, d);
    model.proj.feature_count = static_cast<int>(m);
    model.proj.input_dim = static_cast<int>(d);
    model.proj.length_scale = model.cfg.length_scale;
    read_doubles(in, model.proj.w, m * d);
    read_doubles(in, model.proj.phase, m);
    model.head.tau = model.cfg.ridge_tau;
    read_doubles(in, model.head.beta, m);
    read_doubles(in, model.head.lambda, m * m);
    refresh_head_cache(model.head, static_cast<int>(m));
    if (h.at("has_channel_stats").get<bool>()) {
        auto channels = static_cast<std::size_t>(h.at("n_channels").get<int>());
        read_doubles(in, ck.channel_stats.in_mean, channels);
        read_doubles(in, ck.channel_stats.in_std, channels);
        ck.channel_stats.y_mean = h.at("y_mean").get<double>();
        ck.channel_stats.y_std = h.at("y_std").get<double>();
        ck.channel_stats.valid = true;
    }
    return ck;
}

}  // namespace driftstream
