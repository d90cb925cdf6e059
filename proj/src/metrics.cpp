#include "driftstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace driftstream {

double mape(std::span<const double> predictions, std::span<const double> targets, double floor) {
    if (predictions.empty() || predictions.size() != targets.size())
        throw std::invalid_argument("mape: need equal-length non-empty arrays");
    double s = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        s += std::abs(targets[i] - predictions[i]) / std::max(std::abs(targets[i]), floor);
    return 100.0 * s / static_cast<double>(predictions.size());
}

RecCurve rec_curve(const std::vector<double>& abs_errors, double eps_max, int grid_points) {
    if (abs_errors.empty()) throw std::invalid_argument("rec_curve: no errors given");
    if (!(eps_max > 0.0)) throw std::invalid_argument("rec_curve: eps_max must be positive");
    if (grid_points < 2) throw std::invalid_argument("rec_curve: need at least 2 grid points");
    std::vector<double> sorted = abs_errors;
    std::sort(sorted.begin(), sorted.end());
    RecCurve curve;
    curve.eps_max = eps_max;
    curve.tolerance.resize(static_cast<std::size_t>(grid_points));
    curve.accuracy.resize(static_cast<std::size_t>(grid_points));
    auto n = static_cast<double>(sorted.size());
    for (int j = 0; j < grid_points; ++j) {
        double eps = eps_max * j / (grid_points - 1);
        auto it = std::upper_bound(sorted.begin(), sorted.end(), eps);
        curve.tolerance[static_cast<std::size_t>(j)] = eps;
        curve.accuracy[static_cast<std::size_t>(j)] = static_cast<double>(it - sorted.begin()) / n;
    }
    double area = 0.0;
    for (int j = 0; j + 1 < grid_points; ++j) {
        double f0 = 1.0 - curve.accuracy[static_cast<std::size_t>(j)];
        double f1 = 1.0 - curve.accuracy[static_cast<std::size_t>(j) + 1];
        area += 0.5 * (f0 + f1) *
                (curve.tolerance[static_cast<std::size_t>(j) + 1] - curve.tolerance[static_cast<std::size_t>(j)]);
    }
    curve.aoc = area / eps_max;
    return curve;
}

std::vector<double> moving_average(const std::vector<double>& series, int k) {
    if (k < 1) throw std::invalid_argument("moving_average: k must be >= 1");
    std::vector<double> out(series.size());
    double running = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        running += series[i];
        if (i >= static_cast<std::size_t>(k)) running -= series[i - static_cast<std::size_t>(k)];
        auto count = std::min<std::size_t>(static_cast<std::size_t>(k), i + 1);
        out[i] = running / static_cast<double>(count);
    }
    return out;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("pearson: need two equal-length series of size >= 2");
    auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void MetricReport::finalize() {
    double w_total = 0.0;
    aggregate_mae = aggregate_mse = aggregate_mape = 0.0;
    for (std::size_t i = 0; i < shot_mae.size(); ++i) {
        double w = shot_windows[i];
        aggregate_mae += w * shot_mae[i];
        aggregate_mse += w * shot_mse[i];
        aggregate_mape += w * shot_mape[i];
        w_total += w;
    }
    if (w_total > 0.0) {
        aggregate_mae /= w_total;
        aggregate_mse /= w_total;
        aggregate_mape /= w_total;
    }
}

namespace {

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd r;
    if (xs.empty()) return r;
    for (double x : xs) r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() < 2) return r;  // single trial: std 0
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return r;
}

double improvement(double baseline, double value) {
    if (!(baseline != 0.0)) return std::numeric_limits<double>::quiet_NaN();
    return 100.0 * (baseline - value) / baseline;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::map<std::string, std::vector<MetricReport>>& by_strategy,
                                  const std::string& baseline) {
    if (by_strategy.empty()) throw std::invalid_argument("summarize: no reports");
    double base_mae = std::numeric_limits<double>::quiet_NaN();
    double base_mse = std::numeric_limits<double>::quiet_NaN();
    double base_mape = std::numeric_limits<double>::quiet_NaN();
    auto pull = [](const std::vector<MetricReport>& reports, double MetricReport::* field) {
        std::vector<double> xs;
        xs.reserve(reports.size());
        for (const MetricReport& r : reports) xs.push_back(r.*field);
        return xs;
    };
    if (auto it = by_strategy.find(baseline); it != by_strategy.end() && !it->second.empty()) {
        base_mae = mean_std(pull(it->second, &MetricReport::aggregate_mae)).mean;
        base_mse = mean_std(pull(it->second, &MetricReport::aggregate_mse)).mean;
        base_mape = mean_std(pull(it->second, &MetricReport::aggregate_mape)).mean;
    }
    std::vector<SummaryRow> rows;
    for (const auto& [name, reports] : by_strategy) {
        SummaryRow row;
        row.strategy = name;
        row.trials = static_cast<int>(reports.size());
        auto mae = mean_std(pull(reports, &MetricReport::aggregate_mae));
        auto mse = mean_std(pull(reports, &MetricReport::aggregate_mse));
        auto mp = mean_std(pull(reports, &MetricReport::aggregate_mape));
        row.mae_mean = mae.mean;
        row.mae_std = mae.std;
        row.mse_mean = mse.mean;
        row.mse_std = mse.std;
        row.mape_mean = mp.mean;
        row.mape_std = mp.std;
        row.mae_improvement_pct = improvement(base_mae, mae.mean);
        row.mse_improvement_pct = improvement(base_mse, mse.mean);
        row.mape_improvement_pct = improvement(base_mape, mp.mean);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace driftstream
