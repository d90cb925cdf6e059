#pragma once

#include <vector>

namespace driftstream {

/// Nominal central-coverage levels, strictly increasing in (0, 1).
struct CoverageGrid {
    std::vector<double> levels;

    /// {0.01, 0.02, ..., 0.99}
    static CoverageGrid default_grid();
};

/// Parallel arrays of predicted means, pre-scaling predicted stds, and true
/// targets.
struct CalibrationDataset {
    std::vector<double> mean, std, target;

    std::size_t size() const { return mean.size(); }
};

/// z such that a standard normal lies in [-z, z] with probability p, i.e.
/// Phi^{-1}((1+p)/2). Absolute accuracy well under 1e-6 (Newton on erf).
double std_normal_quantile(double p);

/// Fraction of samples with |y - mean| <= z_p * alpha * std.
double empirical_coverage(const CalibrationDataset& data, double p, double alpha);

/// Mean over the grid of |empirical coverage - nominal|.
double miscalibration_loss(const CalibrationDataset& data, const CoverageGrid& grid, double alpha);

struct AlphaFit {
    double alpha = 1.0;
    bool degenerate = false;  // all residuals zero: alpha left at 1
};

/// argmin over alpha > 0 of the miscalibration loss: 41-point log grid on
/// [1e-2, 1e2], then golden-section refinement of the bracketing interval to
/// 1e-3 relative width. Deterministic.
AlphaFit fit_alpha(const CalibrationDataset& data, const CoverageGrid& grid);

struct CalibrationCurve {
    std::vector<double> nominal, empirical;
    double area = 0.0;
};

/// Nominal-vs-empirical coverage curve on the 99-level grid and the
/// trapezoidal area between it and the diagonal.
CalibrationCurve miscalibration_area(const CalibrationDataset& data, double alpha);

}  // namespace driftstream
