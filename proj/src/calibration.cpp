#include "driftstream/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace driftstream {

CoverageGrid CoverageGrid::default_grid() {
    CoverageGrid g;
    g.levels.reserve(99);
    for (int k = 1; k <= 99; ++k) g.levels.push_back(k / 100.0);
    return g;
}

namespace {

void validate_dataset(const CalibrationDataset& data) {
    if (data.mean.size() != data.std.size() || data.mean.size() != data.target.size())
        throw std::invalid_argument("calibration dataset arrays must have equal length");
    if (data.size() < 10) throw std::invalid_argument("calibration dataset needs at least 10 samples");
    for (double s : data.std)
        if (!(s > 0.0)) throw std::invalid_argument("calibration dataset stds must be positive");
}

void validate_grid(const CoverageGrid& grid) {
    if (grid.levels.empty()) throw std::invalid_argument("coverage grid is empty");
    double prev = 0.0;
    for (double p : grid.levels) {
        if (!(p > prev && p < 1.0))
            throw std::invalid_argument("coverage levels must be strictly increasing in (0,1)");
        prev = p;
    }
}

/// |residual| / std per sample; coverage at (p, alpha) is the fraction of
/// these at or below z_p * alpha. Shared by every operation here so they
/// agree to the last bit.
std::vector<double> coverage_ratios(const CalibrationDataset& data) {
    std::vector<double> r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        r[i] = std::abs(data.target[i] - data.mean[i]) / data.std[i];
    return r;
}

double coverage_from_sorted(const std::vector<double>& sorted_ratios, double threshold) {
    auto it = std::upper_bound(sorted_ratios.begin(), sorted_ratios.end(), threshold);
    return static_cast<double>(it - sorted_ratios.begin()) / static_cast<double>(sorted_ratios.size());
}

double loss_from_sorted(const std::vector<double>& sorted_ratios, const std::vector<double>& z,
                        const std::vector<double>& levels, double alpha) {
    double loss = 0.0;
    for (std::size_t k = 0; k < levels.size(); ++k)
        loss += std::abs(coverage_from_sorted(sorted_ratios, z[k] * alpha) - levels[k]);
    return loss / static_cast<double>(levels.size());
}

}  // namespace

double std_normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("std_normal_quantile: p must be in (0,1)");
    // Central coverage p means erf(z / sqrt(2)) = p; bisect erf then polish
    // with Newton.
    double lo = 0.0, hi = 9.0;
    for (int i = 0; i < 60; ++i) {
        double mid = 0.5 * (lo + hi);
        if (std::erf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    double t = 0.5 * (lo + hi);
    for (int i = 0; i < 2; ++i) {
        double f = std::erf(t) - p;
        double df = 2.0 / std::sqrt(3.14159265358979323846) * std::exp(-t * t);
        if (df > 0.0) t -= f / df;
    }
    return t * std::sqrt(2.0);
}

double empirical_coverage(const CalibrationDataset& data, double p, double alpha) {
    validate_dataset(data);
    if (!(alpha > 0.0)) throw std::invalid_argument("empirical_coverage: alpha must be positive");
    double z = std_normal_quantile(p);
    double threshold = z * alpha;
    std::size_t covered = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (std::abs(data.target[i] - data.mean[i]) / data.std[i] <= threshold) ++covered;
    return static_cast<double>(covered) / static_cast<double>(data.size());
}

double miscalibration_loss(const CalibrationDataset& data, const CoverageGrid& grid, double alpha) {
    validate_dataset(data);
    validate_grid(grid);
    if (!(alpha > 0.0)) throw std::invalid_argument("miscalibration_loss: alpha must be positive");
    std::vector<double> r = coverage_ratios(data);
    std::sort(r.begin(), r.end());
    std::vector<double> z(grid.levels.size());
    for (std::size_t k = 0; k < grid.levels.size(); ++k) z[k] = std_normal_quantile(grid.levels[k]);
    return loss_from_sorted(r, z, grid.levels, alpha);
}

AlphaFit fit_alpha(const CalibrationDataset& data, const CoverageGrid& grid) {
    validate_dataset(data);
    validate_grid(grid);
    std::vector<double> r = coverage_ratios(data);
    bool all_zero = true;
    for (double x : r)
        if (x != 0.0) { all_zero = false; break; }
    if (all_zero) return {1.0, true};
    std::sort(r.begin(), r.end());
    std::vector<double> z(grid.levels.size());
    for (std::size_t k = 0; k < grid.levels.size(); ++k) z[k] = std_normal_quantile(grid.levels[k]);
    auto loss_log10 = [&](double l) { return loss_from_sorted(r, z, grid.levels, std::pow(10.0, l)); };

    // Coarse logarithmic grid over [1e-2, 1e2], 41 points.
    int best = 0;
    double best_loss = 1e300;
    for (int j = 0; j <= 40; ++j) {
        double l = -2.0 + 4.0 * j / 40.0;
        double v = loss_log10(l);
        if (v < best_loss) {
            best_loss = v;
            best = j;
        }
    }
    double lo = -2.0 + 4.0 * std::max(0, best - 1) / 40.0;
    double hi = -2.0 + 4.0 * std::min(40, best + 1) / 40.0;

    // Golden-section refinement until the bracket is below 1e-3 relative
    // width (log10(1 + 1e-3) in log space).
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    const double width_limit = std::log10(1.0 + 1e-3);
    double x1 = hi - phi * (hi - lo);
    double x2 = lo + phi * (hi - lo);
    double f1 = loss_log10(x1);
    double f2 = loss_log10(x2);
    while (hi - lo > width_limit) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = loss_log10(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = loss_log10(x2);
        }
    }
    return {std::pow(10.0, 0.5 * (lo + hi)), false};
}

CalibrationCurve miscalibration_area(const CalibrationDataset& data, double alpha) {
    validate_dataset(data);
    if (!(alpha > 0.0)) throw std::invalid_argument("miscalibration_area: alpha must be positive");
    CoverageGrid grid = CoverageGrid::default_grid();
    std::vector<double> r = coverage_ratios(data);
    std::sort(r.begin(), r.end());
    CalibrationCurve curve;
    curve.nominal = grid.levels;
    curve.empirical.resize(grid.levels.size());
    for (std::size_t k = 0; k < grid.levels.size(); ++k)
        curve.empirical[k] = coverage_from_sorted(r, std_normal_quantile(grid.levels[k]) * alpha);
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < grid.levels.size(); ++k) {
        double f0 = std::abs(curve.empirical[k] - curve.nominal[k]);
        double f1 = std::abs(curve.empirical[k + 1] - curve.nominal[k + 1]);
        area += 0.5 * (f0 + f1) * (curve.nominal[k + 1] - curve.nominal[k]);
    }
    curve.area = area;
    return curve;
}

}  // namespace driftstream
