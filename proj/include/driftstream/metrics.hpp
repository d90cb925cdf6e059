#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "driftstream/calibration.hpp"

namespace driftstream {

/// Mean absolute percentage error with a floored denominator guarding
/// near-zero targets.
double mape(std::span<const double> predictions, std::span<const double> targets, double floor = 1e-3);

/// Regression error characteristic: accuracy(eps) = fraction of samples with
/// |error| <= eps over an even grid on [0, eps_max]; aoc is the normalized
/// trapezoidal area over the curve.
struct RecCurve {
    std::vector<double> tolerance, accuracy;
    double aoc = 0.0;
    double eps_max = 0.0;
};

RecCurve rec_curve(const std::vector<double>& abs_errors, double eps_max, int grid_points = 200);

/// Trailing moving average: out[i] = mean of the last min(k, i+1) points.
std::vector<double> moving_average(const std::vector<double>& series, int k = 20);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

/// Per-shot and aggregate statistics for one (strategy, trial) stream run.
struct MetricReport {
    std::vector<std::int64_t> shot_ids;
    std::vector<double> shot_mae, shot_mse, shot_mape, shot_mean_sigma;
    std::vector<int> shot_windows;
    std::vector<double> shot_wall_ms;

    // Window-count-weighted aggregates over all shots.
    double aggregate_mae = 0.0, aggregate_mse = 0.0, aggregate_mape = 0.0;

    std::vector<double> window_abs_errors;  // pooled across the stream
    CalibrationDataset fused;               // pooled fused (mean, sigma, target)

    /// Recomputes the aggregates from the per-shot arrays.
    void finalize();
};

struct SummaryRow {
    std::string strategy;
    int trials = 0;
    double mae_mean = 0, mae_std = 0, mse_mean = 0, mse_std = 0, mape_mean = 0, mape_std = 0;
    // Percentage improvement vs the single-online baseline; NaN when the
    // baseline strategy is absent.
    double mae_improvement_pct = 0, mse_improvement_pct = 0, mape_improvement_pct = 0;
};

/// Mean +- sample standard deviation across trials per strategy, with
/// improvement columns computed as 100*(baseline - value)/baseline.
std::vector<SummaryRow> summarize(const std::map<std::string, std::vector<MetricReport>>& by_strategy,
                                  const std::string& baseline = "single_online");

}  // namespace driftstream
