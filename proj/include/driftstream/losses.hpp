#pragma once

#include <span>
#include <utility>
#include <vector>

#include "driftstream/layers.hpp"

namespace driftstream {

inline constexpr double kDefaultLipschitzLower = 0.75;
inline constexpr double kDefaultLipschitzUpper = 1.25;
inline constexpr int kDefaultMaxPairs = 64;

/// Mean absolute error. Throws std::invalid_argument on empty or mismatched
/// inputs.
double mae_loss(std::span<const double> predictions, std::span<const double> targets);

/// All unordered pairs of {0..n-1}, uniformly subsampled to at most
/// `max_pairs` using `rng` when there are more.
std::vector<std::pair<int, int>> sample_pairs(int n, int max_pairs, Rng& rng);

struct BilipResult {
    double penalty = 0.0;
    bool no_pairs = false;  // batch had fewer than two inputs
};

/// Soft two-sided Lipschitz penalty on the feature map: mean over pairs of
/// max(0, l1*|dx| - |dh|) + max(0, |dh| - l2*|dx|). Inference-mode forward.
BilipResult bilip_penalty(const NetworkParams& params, const std::vector<LayerSpec>& specs,
                          const std::vector<Tensor>& batch, double l1 = kDefaultLipschitzLower,
                          double l2 = kDefaultLipschitzUpper, int max_pairs = kDefaultMaxPairs,
                          Rng* rng = nullptr);

}  // namespace driftstream
