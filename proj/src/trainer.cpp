#include "driftstream/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <stdexcept>

#include "driftstream/calibration.hpp"
#include "driftstream/errors.hpp"

namespace driftstream {

GradientSet zero_gradients(const DgpaModel& model) {
    GradientSet g;
    g.net = zeros_like(model.params);
    g.beta.assign(model.head.beta.size(), 0.0);
    return g;
}

namespace {

inline double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Per-sample forward state kept between the phases of batch_loss.
struct SampleState {
    ForwardTrace trace;
    std::vector<double> h;        // raw hidden output
    std::vector<double> u;        // W z + phase (head path)
    std::vector<double> phi;      // Fourier features (head path)
    std::vector<double> pen_seed; // d(penalty)/dh, unweighted
    double prediction = 0.0;
    double residual = 0.0;
};

}  // namespace

LossBreakdown batch_loss(const DgpaModel& model, const std::vector<const WindowSample*>& batch,
                         const BatchOptions& options, std::uint64_t batch_seed, GradientSet* grads) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    if (!options.through_head && model.hidden_dim() != 1)
        throw ConfigError("direct-output loss needs a one-unit final layer");

    const auto n = static_cast<std::int64_t>(batch.size());
    const int d = model.hidden_dim();
    const int m = model.proj.feature_count;
    const double c = std::sqrt(2.0 / m);

    std::vector<SampleState> samples(batch.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            SampleState& s = samples[static_cast<std::size_t>(i)];
            Rng rng(mix_seed(mix_seed(batch_seed, 1), static_cast<std::uint64_t>(i)));
            Tensor h = network_forward(model.params, model.specs, batch[static_cast<std::size_t>(i)]->input,
                                       options.training_mode, rng, &s.trace);
            s.h = h.v;
            if (options.through_head) {
                std::vector<double> z = s.h;
                if (model.standardizer.frozen)
                    for (int k = 0; k < d; ++k)
                        z[static_cast<std::size_t>(k)] =
                            (z[static_cast<std::size_t>(k)] - model.standardizer.mean[static_cast<std::size_t>(k)]) *
                            model.standardizer.inv_std[static_cast<std::size_t>(k)];
                s.u.resize(static_cast<std::size_t>(m));
                s.phi.resize(static_cast<std::size_t>(m));
                for (int j = 0; j < m; ++j) {
                    double acc = model.proj.phase[static_cast<std::size_t>(j)];
                    const double* wj = &model.proj.w[static_cast<std::size_t>(j) * d];
                    for (int k = 0; k < d; ++k) acc += wj[k] * z[static_cast<std::size_t>(k)];
                    s.u[static_cast<std::size_t>(j)] = acc;
                    s.phi[static_cast<std::size_t>(j)] = c * std::cos(acc);
                }
                s.prediction = dot(model.head.beta, s.phi);
            } else {
                s.prediction = s.h[0];
            }
            s.residual = s.prediction - batch[static_cast<std::size_t>(i)]->target;
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    LossBreakdown out;
    for (const SampleState& s : samples) {
        out.mae += std::abs(s.residual);
        out.relu_margin = std::min(out.relu_margin, s.trace.relu_margin);
        out.pool_margin = std::min(out.pool_margin, s.trace.pool_margin);
        out.residual_margin = std::min(out.residual_margin, std::abs(s.residual));
    }
    out.mae /= static_cast<double>(n);

    // Bi-Lipschitz penalty over sampled within-batch pairs (on raw h).
    std::vector<std::pair<int, int>> pairs;
    if (options.penalty_weight > 0.0) {
        if (batch.size() < 2) {
            out.no_pairs = true;
        } else {
            Rng pair_rng(mix_seed(batch_seed, 2));
            pairs = sample_pairs(static_cast<int>(batch.size()), model.cfg.max_pairs, pair_rng);
        }
    }
    if (!pairs.empty()) {
        const double l1 = model.cfg.lipschitz_lower;
        const double l2 = model.cfg.lipschitz_upper;
        const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
        bool want_grads = grads != nullptr;
        if (want_grads)
            for (SampleState& s : samples) s.pen_seed.assign(static_cast<std::size_t>(d), 0.0);
        double total = 0.0;
        for (auto [a, b] : pairs) {
            SampleState& sa = samples[static_cast<std::size_t>(a)];
            SampleState& sb = samples[static_cast<std::size_t>(b)];
            double dx = euclidean_distance(batch[static_cast<std::size_t>(a)]->input.v,
                                           batch[static_cast<std::size_t>(b)]->input.v);
            double dh = euclidean_distance(sa.h, sb.h);
            double lower = l1 * dx - dh;
            double upper = dh - l2 * dx;
            total += std::max(0.0, lower) + std::max(0.0, upper);
            out.hinge_margin = std::min(out.hinge_margin, std::min(std::abs(lower), std::abs(upper)));
            if (want_grads && dh > 0.0) {
                double coef = (lower > 0.0 ? -1.0 : 0.0) + (upper > 0.0 ? 1.0 : 0.0);
                if (coef != 0.0) {
                    double scale = coef * inv_pairs / dh;
                    for (int k = 0; k < d; ++k) {
                        double dir = (sa.h[static_cast<std::size_t>(k)] - sb.h[static_cast<std::size_t>(k)]) * scale;
                        sa.pen_seed[static_cast<std::size_t>(k)] += dir;
                        sb.pen_seed[static_cast<std::size_t>(k)] -= dir;
                    }
                }
            }
        }
        out.penalty = total * inv_pairs;
    }
    out.total = out.mae + options.penalty_weight * out.penalty;

    if (grads == nullptr) return out;

    // Per-sample backward into private slots, then a fixed-order reduction.
    std::vector<GradientSet> slots(batch.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            SampleState& s = samples[static_cast<std::size_t>(i)];
            GradientSet& slot = slots[static_cast<std::size_t>(i)];
            slot.net = zeros_like(model.params);
            slot.beta.assign(static_cast<std::size_t>(m), 0.0);
            double r = sign0(s.residual) / static_cast<double>(n);
            std::vector<double> g_h(static_cast<std::size_t>(d), 0.0);
            if (options.through_head) {
                if (r != 0.0) {
                    for (int j = 0; j < m; ++j)
                        slot.beta[static_cast<std::size_t>(j)] = r * s.phi[static_cast<std::size_t>(j)];
                    // d(mean)/du_j = -c * beta_j * sin(u_j); chain back to z then h.
                    std::vector<double> g_u(static_cast<std::size_t>(m));
                    for (int j = 0; j < m; ++j)
                        g_u[static_cast<std::size_t>(j)] =
                            -r * c * model.head.beta[static_cast<std::size_t>(j)] *
                            std::sin(s.u[static_cast<std::size_t>(j)]);
                    for (int j = 0; j < m; ++j) {
                        const double* wj = &model.proj.w[static_cast<std::size_t>(j) * d];
                        double gu = g_u[static_cast<std::size_t>(j)];
                        if (gu == 0.0) continue;
                        for (int k = 0; k < d; ++k) g_h[static_cast<std::size_t>(k)] += gu * wj[k];
                    }
                    if (model.standardizer.frozen)
                        for (int k = 0; k < d; ++k)
                            g_h[static_cast<std::size_t>(k)] *= model.standardizer.inv_std[static_cast<std::size_t>(k)];
                }
            } else {
                g_h[0] = r;
            }
            if (!s.pen_seed.empty())
                for (int k = 0; k < d; ++k)
                    g_h[static_cast<std::size_t>(k)] +=
                        options.penalty_weight * s.pen_seed[static_cast<std::size_t>(k)];
            network_backward(model.params, model.specs, s.trace, g_h, slot.net);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    for (const GradientSet& slot : slots) {
        for (std::size_t l = 0; l < grads->net.layers.size(); ++l) {
            auto& gw = grads->net.layers[l].w.v;
            auto& gb = grads->net.layers[l].b.v;
            const auto& sw = slot.net.layers[l].w.v;
            const auto& sb = slot.net.layers[l].b.v;
            for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += sw[k];
            for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += sb[k];
        }
        for (std::size_t k = 0; k < grads->beta.size(); ++k) grads->beta[k] += slot.beta[k];
    }
    return out;
}

std::vector<ParamView> trainable_views(DgpaModel& model) {
    std::vector<ParamView> views;
    for (LayerParams& lp : model.params.layers) {
        if (!lp.w.v.empty()) views.push_back({lp.w.v.data(), lp.w.v.size()});
        if (!lp.b.v.empty()) views.push_back({lp.b.v.data(), lp.b.v.size()});
    }
    views.push_back({model.head.beta.data(), model.head.beta.size()});
    return views;
}

std::vector<GradView> gradient_views(const GradientSet& grads) {
    std::vector<GradView> views;
    for (const LayerParams& lp : grads.net.layers) {
        if (!lp.w.v.empty()) views.push_back({lp.w.v.data(), lp.w.v.size()});
        if (!lp.b.v.empty()) views.push_back({lp.b.v.data(), lp.b.v.size()});
    }
    views.push_back({grads.beta.data(), grads.beta.size()});
    return views;
}

std::size_t trainable_size(const DgpaModel& model) {
    std::size_t n = model.head.beta.size();
    for (const LayerParams& lp : model.params.layers) n += lp.w.v.size() + lp.b.v.size();
    return n;
}

LossBreakdown fine_tune_session(DgpaModel& model, AdamState& adam,
                                const std::vector<WindowSample>& windows, const TrainOptions& options,
                                std::uint64_t session_seed) {
    if (windows.empty()) throw std::invalid_argument("fine_tune_session: no windows");
    BatchOptions bopt;
    bopt.penalty_weight = model.cfg.penalty_weight;
    bopt.through_head = true;
    bopt.training_mode = true;

    LossBreakdown mean;
    int batches_done = 0;
    std::vector<std::size_t> order(windows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(mix_seed(session_seed, 3), static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        std::size_t pos = 0;
        int batch_index = 0;
        while (pos < order.size()) {
            std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size),
                                                     order.size() - pos);
            std::vector<const WindowSample*> batch(take);
            for (std::size_t k = 0; k < take; ++k) batch[k] = &windows[order[pos + k]];
            pos += take;
            GradientSet grads = zero_gradients(model);
            std::uint64_t batch_seed = mix_seed(mix_seed(mix_seed(session_seed, 4),
                                                         static_cast<std::uint64_t>(epoch)),
                                                static_cast<std::uint64_t>(batch_index));
            LossBreakdown lb = batch_loss(model, batch, bopt, batch_seed, &grads);
            auto views = trainable_views(model);
            adam_step(views, gradient_views(grads), adam);
            mean.mae += lb.mae;
            mean.penalty += lb.penalty;
            mean.total += lb.total;
            ++batches_done;
            ++batch_index;
        }
    }
    if (batches_done > 0) {
        mean.mae /= batches_done;
        mean.penalty /= batches_done;
        mean.total /= batches_done;
    }
    return mean;
}

std::vector<double> predict_mean_batch(const DgpaModel& model, const std::vector<WindowSample>& windows) {
    std::vector<double> out(windows.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(windows.size()); ++i) {
        try {
            auto phi = model_features(model, windows[static_cast<std::size_t>(i)].input);
            out[static_cast<std::size_t>(i)] = dot(model.head.beta, phi);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return out;
}

double eval_mae(const DgpaModel& model, const std::vector<WindowSample>& windows) {
    if (windows.empty()) throw std::invalid_argument("eval_mae: no windows");
    std::vector<double> preds = predict_mean_batch(model, windows);
    std::vector<double> targets(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) targets[i] = windows[i].target;
    return mae_loss(preds, targets);
}

std::vector<WindowSample> subsample_evenly(const std::vector<WindowSample>& windows, int cap) {
    if (cap <= 0 || windows.size() <= static_cast<std::size_t>(cap)) return windows;
    std::vector<WindowSample> out;
    out.reserve(static_cast<std::size_t>(cap));
    double step = static_cast<double>(windows.size()) / cap;
    for (int k = 0; k < cap; ++k)
        out.push_back(windows[static_cast<std::size_t>(step * k)]);
    return out;
}

PretrainResult pretrain(DgpaModel& model, const std::vector<ShotRecord>& train_shots,
                        const std::vector<ShotRecord>& val_shots, const PretrainOptions& options) {
    PretrainResult result;
    if (options.max_epochs == 0) return result;  // untrained checkpoint path
    std::vector<WindowSample> train = windowize_all(train_shots, options.window_length, options.stride);
    std::vector<WindowSample> val = windowize_all(val_shots, options.window_length, options.stride);
    if (train.empty()) throw ConfigError("pretraining set produced no windows");

    AdamState adam = AdamState::for_size(trainable_size(model), model.cfg.adam);
    TrainOptions topt;
    topt.epochs = 1;
    topt.batch_size = options.batch_size;

    double best_val = 1e300;
    int stale = 0;
    NetworkParams best_params = model.params;
    std::vector<double> best_beta = model.head.beta;
    for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
        std::uint64_t epoch_seed = mix_seed(mix_seed(options.seed, 5), static_cast<std::uint64_t>(epoch));
        LossBreakdown lb = fine_tune_session(model, adam, train, topt, epoch_seed);
        result.train_loss.push_back(lb.total);
        result.epochs_run = epoch + 1;
        if (!val.empty()) {
            double vm = eval_mae(model, val);
            result.val_mae.push_back(vm);
            if (vm < best_val) {
                best_val = vm;
                result.best_epoch = epoch;
                best_params = model.params;
                best_beta = model.head.beta;
                stale = 0;
            } else if (++stale >= options.patience) {
                result.early_stopped = true;
                break;
            }
        } else {
            result.best_epoch = epoch;
        }
    }
    if (!val.empty() && result.best_epoch >= 0) {
        model.params = std::move(best_params);
        model.head.beta = std::move(best_beta);
    }

    freeze_standardizer(model, subsample_evenly(train, options.head_max_windows));
    update_head(model, subsample_evenly(train, options.head_max_windows));

    std::vector<WindowSample> calib = subsample_evenly(val.empty() ? train : val, options.calib_max_windows);
    if (calib.size() >= 10) {
        auto preds = predict_batch(model, calib);
        CalibrationDataset ds;
        ds.mean.reserve(calib.size());
        ds.std.reserve(calib.size());
        ds.target.reserve(calib.size());
        for (std::size_t i = 0; i < calib.size(); ++i) {
            ds.mean.push_back(preds[i].mean);
            ds.std.push_back(preds[i].sigma_raw);
            ds.target.push_back(calib[i].target);
        }
        AlphaFit fit = fit_alpha(ds, CoverageGrid::default_grid());
        if (!fit.degenerate) {
            model.alpha = fit.alpha;
            result.calibrated = true;
        }
        result.alpha = model.alpha;
    }
    return result;
}

}  // namespace driftstream
