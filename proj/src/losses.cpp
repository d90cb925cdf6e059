#include "driftstream/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace driftstream {

double mae_loss(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw std::invalid_argument("mae_loss: need equal-length non-empty arrays");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
    return s / static_cast<double>(predictions.size());
}

std::vector<std::pair<int, int>> sample_pairs(int n, int max_pairs, Rng& rng) {
    std::vector<std::pair<int, int>> all;
    all.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) all.emplace_back(i, j);
    if (static_cast<int>(all.size()) <= max_pairs) return all;
    // Partial Fisher-Yates: the first max_pairs slots become a uniform sample.
    for (int k = 0; k < max_pairs; ++k) {
        std::size_t j = static_cast<std::size_t>(k) + rng.index(all.size() - k);
        std::swap(all[static_cast<std::size_t>(k)], all[j]);
    }
    all.resize(static_cast<std::size_t>(max_pairs));
    return all;
}

BilipResult bilip_penalty(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                          const std::vector<Tensor>& batch, double l1, double l2, int max_pairs,
                          Rng* rng) {
    BilipResult result;
    if (batch.size() < 2) {
        result.no_pairs = true;
        return result;
    }
    Rng fallback(0);
    Rng& pair_rng = rng ? *rng : fallback;
    auto pairs = sample_pairs(static_cast<int>(batch.size()), max_pairs, pair_rng);

    std::vector<std::vector<double>> hidden(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        hidden[i] = network_forward(params, specs, batch[i]).v;

    double total = 0.0;
    for (auto [a, b] : pairs) {
        double dx = euclidean_distance(batch[static_cast<std::size_t>(a)].v,
                                       batch[static_cast<std::size_t>(b)].v);
        double dh = euclidean_distance(hidden[static_cast<std::size_t>(a)],
                                       hidden[static_cast<std::size_t>(b)]);
        total += std::max(0.0, l1 * dx - dh) + std::max(0.0, dh - l2 * dx);
    }
    result.penalty = total / static_cast<double>(pairs.size());
    return result;
}

}  // namespace driftstream
