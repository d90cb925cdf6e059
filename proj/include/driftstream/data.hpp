#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "driftstream/rng.hpp"
#include "driftstream/tensor.hpp"

namespace driftstream {

inline constexpr int kInputChannels = 9;
inline constexpr int kDefaultWindowLength = 100;

/// One experimental discharge: multichannel input series plus the target
/// deflection series, stored channel-major.
struct ShotRecord {
    std::int64_t shot_id = 0;
    int channels = kInputChannels;
    int length = 0;
    std::vector<double> inputs;  // channels x length, row-major by channel
    std::vector<double> target;  // length
    bool standardized = false;

    double input_at(int c, int t) const { return inputs[static_cast<std::size_t>(c) * length + t]; }
    double& input_at(int c, int t) { return inputs[static_cast<std::size_t>(c) * length + t]; }
};

/// Fixed-length slice of a shot: (window_length x channels) input tensor and
/// the target at the window's last step. The target series is never part of
/// the input channels.
struct WindowSample {
    Tensor input;  // {window_length, channels}
    double target = 0.0;
    std::int64_t shot_id = 0;
    int end_index = 0;
};

/// Parses "shot_id,t,x1,...,x9,y" CSV. Missing cells become NaN (left for
/// preprocess to drop); malformed cells raise DataError naming the line.
std::vector<ShotRecord> load_shots_csv(const std::string& path);

/// Writes shots in the load_shots_csv schema (full double precision).
void save_shots_csv(const std::vector<ShotRecord>& shots, const std::string& path);

struct PreprocessReport {
    int kept = 0;
    int dropped_nan = 0;
    int dropped_stuck = 0;
};

/// Drops shots with any NaN and "stuck sensor" shots whose target has both
/// standard deviation and mean absolute value below the threshold.
std::pair<std::vector<ShotRecord>, PreprocessReport> preprocess(std::vector<ShotRecord> shots,
                                                                double stuck_threshold = 1e-3);

/// Sliding windows over one shot; sample k covers input steps
/// [k*stride, k*stride + window_length) and targets the window's last step.
/// Returns an empty list when the shot is shorter than the window.
std::vector<WindowSample> windowize(const ShotRecord& shot, int window_length = kDefaultWindowLength,
                                    int stride = 1);

std::vector<WindowSample> windowize_all(const std::vector<ShotRecord>& shots,
                                        int window_length = kDefaultWindowLength, int stride = 1);

struct SplitResult {
    std::vector<ShotRecord> train, val, test;
};

/// Shot-level random partition: floor(train), floor(val), remainder test.
/// Deterministic in the seed. Throws std::invalid_argument when there are
/// fewer shots than partitions or ratios do not sum to 1.
SplitResult split(std::vector<ShotRecord> shots, std::array<double, 3> ratios, std::uint64_t seed);

enum class DriftKind { kAbrupt, kGradual, kNone };

struct DriftEvent {
    int shot_index = 0;
    DriftKind kind = DriftKind::kNone;
    double magnitude = 0.0;
};

struct SyntheticStreamConfig {
    int n_shots = 0;
    int shot_length = 1020;
    std::vector<DriftEvent> schedule;  // sorted by shot_index, all in [0, n_shots)
    double noise_std = 0.05;
    std::uint64_t seed = 0;
    int gradual_span = 50;  // shots over which a gradual event ramps
};

/// Synthetic non-stationary stream. Inputs are AR(1) processes (coefficient
/// 0.95, unit stationary variance) around a per-shot offset; the target is a
/// random two-layer tanh map of the current input step plus Gaussian noise.
/// Drift events jump (or ramp) both the map parameters and the input offsets.
/// Bit-deterministic given the seed; per-shot sub-seeds derive from
/// (seed, shot_id), so shots may be generated in any order.
std::vector<ShotRecord> generate_synthetic_stream(const SyntheticStreamConfig& config);

/// Per-channel (and target) affine standardization fitted on the pretraining
/// split only.
struct ChannelStandardizer {
    bool valid = false;
    std::vector<double> in_mean, in_std;  // per channel
    double y_mean = 0.0, y_std = 1.0;
};

ChannelStandardizer fit_standardizer(const std::vector<ShotRecord>& shots);

/// In-place standardization. Throws std::invalid_argument if any shot is
/// already standardized (double application is a bug, not a no-op).
void apply_standardizer(const ChannelStandardizer& st, std::vector<ShotRecord>& shots);

}  // namespace driftstream
