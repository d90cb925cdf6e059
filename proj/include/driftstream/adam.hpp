#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace driftstream {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moment accumulators over a flat view of all trainable
/// parameters, plus the step counter.
struct AdamState {
    AdamConfig cfg;
    std::int64_t step_count = 0;
    std::vector<double> m, v;

    static AdamState for_size(std::size_t n, AdamConfig cfg = {}) {
        AdamState s;
        s.cfg = cfg;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        return s;
    }
};

/// Mutable views over the trainable parameter tensors, in a fixed order.
struct ParamView {
    double* data;
    std::size_t size;
};
struct GradView {
    const double* data;
    std::size_t size;
};

/// Standard Adam update with bias correction; increments the step counter.
/// Throws std::invalid_argument when view sizes do not match the state.
inline void adam_step(const std::vector<ParamView>& params, const std::vector<GradView>& grads,
                      AdamState& state) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: view count mismatch");
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size)
            throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
        total += params[i].size;
    }
    if (total != state.m.size()) throw std::invalid_argument("adam_step: state size mismatch");

    state.step_count += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    std::size_t off = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i].data;
        const double* g = grads[i].data;
        for (std::size_t k = 0; k < params[i].size; ++k) {
            double& m = state.m[off + k];
            double& v = state.v[off + k];
            m = b1 * m + (1.0 - b1) * g[k];
            v = b2 * v + (1.0 - b2) * g[k] * g[k];
            double mhat = m / corr1;
            double vhat = v / corr2;
            p[k] -= state.cfg.learning_rate * mhat / (std::sqrt(vhat) + state.cfg.epsilon);
        }
        off += params[i].size;
    }
}

}  // namespace driftstream
