#include "driftstream/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "driftstream/errors.hpp"

namespace driftstream {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_cell(const std::string& cell, int line_no, const char* what) {
    if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw DataError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" + cell + "'");
    }
    return value;
}

std::string expected_header() {
    std::string h = "shot_id,t";
    for (int c = 1; c <= kInputChannels; ++c) h += ",x" + std::to_string(c);
    h += ",y";
    return h;
}

}  // namespace

std::vector<ShotRecord> load_shots_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty (no header)");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header())
        throw DataError("line 1: bad header, expected '" + expected_header() + "'");

    std::vector<ShotRecord> shots;
    ShotRecord* cur = nullptr;
    std::int64_t last_t = 0;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (static_cast<int>(cells.size()) != kInputChannels + 3)
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(kInputChannels + 3) + " fields, got " +
                            std::to_string(cells.size()));
        double id_val = parse_cell(cells[0], line_no, "shot_id");
        auto shot_id = static_cast<std::int64_t>(id_val);
        double t_val = parse_cell(cells[1], line_no, "t");
        auto t = static_cast<std::int64_t>(t_val);

        if (cur == nullptr || cur->shot_id != shot_id) {
            if (cur != nullptr && shot_id <= cur->shot_id)
                throw DataError("line " + std::to_string(line_no) +
                                ": shot ids must be strictly increasing");
            shots.emplace_back();
            cur = &shots.back();
            cur->shot_id = shot_id;
            cur->channels = kInputChannels;
            last_t = -1;
        }
        if (t <= last_t)
            throw DataError("line " + std::to_string(line_no) + ": time steps must be increasing");
        last_t = t;
        for (int c = 0; c < kInputChannels; ++c)
            cur->inputs.push_back(parse_cell(cells[static_cast<std::size_t>(2 + c)], line_no,
                                             ("x" + std::to_string(c + 1)).c_str()));
        cur->target.push_back(parse_cell(cells.back(), line_no, "y"));
        cur->length += 1;
    }
    // Reorder inputs from interleaved (t-major) to channel-major.
    for (ShotRecord& s : shots) {
        std::vector<double> by_channel(s.inputs.size());
        for (int t = 0; t < s.length; ++t)
            for (int c = 0; c < s.channels; ++c)
                by_channel[static_cast<std::size_t>(c) * s.length + t] =
                    s.inputs[static_cast<std::size_t>(t) * s.channels + c];
        s.inputs = std::move(by_channel);
    }
    return shots;
}

void save_shots_csv(const std::vector<ShotRecord>& shots, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << expected_header() << "\n";
    char buf[32];
    for (const ShotRecord& s : shots) {
        for (int t = 0; t < s.length; ++t) {
            out << s.shot_id << ',' << t;
            for (int c = 0; c < s.channels; ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", s.input_at(c, t));
                out << ',' << buf;
            }
            std::snprintf(buf, sizeof(buf), "%.17g", s.target[static_cast<std::size_t>(t)]);
            out << ',' << buf << "\n";
        }
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

std::pair<std::vector<ShotRecord>, PreprocessReport> preprocess(std::vector<ShotRecord> shots,
                                                                double stuck_threshold) {
    std::vector<ShotRecord> kept;
    PreprocessReport report;
    for (ShotRecord& s : shots) {
        bool has_nan = false;
        for (double x : s.inputs)
            if (!std::isfinite(x)) { has_nan = true; break; }
        if (!has_nan)
            for (double y : s.target)
                if (!std::isfinite(y)) { has_nan = true; break; }
        if (has_nan) {
            report.dropped_nan += 1;
            continue;
        }
        double mean = 0.0, mean_abs = 0.0;
        for (double y : s.target) {
            mean += y;
            mean_abs += std::abs(y);
        }
        mean /= s.length;
        mean_abs /= s.length;
        double var = 0.0;
        for (double y : s.target) var += (y - mean) * (y - mean);
        double sd = std::sqrt(var / s.length);
        if (sd < stuck_threshold && mean_abs < stuck_threshold) {
            report.dropped_stuck += 1;
            continue;
        }
        kept.push_back(std::move(s));
    }
    report.kept = static_cast<int>(kept.size());
    return {std::move(kept), report};
}

std::vector<WindowSample> windowize(const ShotRecord& shot, int window_length, int stride) {
    if (window_length < 1 || stride < 1)
        throw std::invalid_argument("windowize: window_length and stride must be positive");
    std::vector<WindowSample> out;
    if (shot.length < window_length) return out;
    int n = (shot.length - window_length) / stride + 1;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        WindowSample w;
        w.input = Tensor::zeros({window_length, shot.channels});
        int start = k * stride;
        for (int t = 0; t < window_length; ++t)
            for (int c = 0; c < shot.channels; ++c) w.input.at(t, c) = shot.input_at(c, start + t);
        w.end_index = start + window_length - 1;
        w.target = shot.target[static_cast<std::size_t>(w.end_index)];
        w.shot_id = shot.shot_id;
        out.push_back(std::move(w));
    }
    return out;
}

std::vector<WindowSample> windowize_all(const std::vector<ShotRecord>& shots, int window_length,
                                        int stride) {
    std::vector<WindowSample> out;
    for (const ShotRecord& s : shots) {
        auto w = windowize(s, window_length, stride);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

SplitResult split(std::vector<ShotRecord> shots, std::array<double, 3> ratios, std::uint64_t seed) {
    double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
    if (shots.size() < 3) throw std::invalid_argument("split: need at least as many shots as partitions");
    std::vector<std::size_t> order(shots.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    auto n = static_cast<double>(shots.size());
    auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * n));
    auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * n));
    SplitResult result;
    for (std::size_t i = 0; i < order.size(); ++i) {
        ShotRecord& s = shots[order[i]];
        if (i < n_train)
            result.train.push_back(std::move(s));
        else if (i < n_train + n_val)
            result.val.push_back(std::move(s));
        else
            result.test.push_back(std::move(s));
    }
    return result;
}

namespace {

constexpr int kMapWidth = 16;

/// Parameters of the random target map and the input offsets; drift moves
/// these between shots.
struct LatentParams {
    std::vector<double> a;       // kMapWidth x channels
    std::vector<double> bias;    // kMapWidth
    std::vector<double> outer;   // kMapWidth
    std::vector<double> offset;  // channels

    void axpy(double w, const LatentParams& d) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += w * d.a[i];
        for (std::size_t i = 0; i < bias.size(); ++i) bias[i] += w * d.bias[i];
        for (std::size_t i = 0; i < outer.size(); ++i) outer[i] += w * d.outer[i];
        for (std::size_t i = 0; i < offset.size(); ++i) offset[i] += w * d.offset[i];
    }
};

LatentParams draw_latent(Rng& rng, int channels) {
    LatentParams p;
    p.a.resize(static_cast<std::size_t>(kMapWidth) * channels);
    p.bias.resize(kMapWidth);
    p.outer.resize(kMapWidth);
    p.offset.resize(static_cast<std::size_t>(channels));
    double a_std = 1.0 / std::sqrt(static_cast<double>(channels));
    for (double& x : p.a) x = rng.normal(0.0, a_std);
    for (double& x : p.bias) x = rng.normal(0.0, 0.5);
    for (double& x : p.outer) x = rng.normal(0.0, std::sqrt(2.0 / kMapWidth));
    for (double& x : p.offset) x = rng.normal(0.0, 0.5);
    return p;
}

double eval_map(const LatentParams& p, const double* x, int channels) {
    double y = 0.0;
    for (int j = 0; j < kMapWidth; ++j) {
        double pre = p.bias[static_cast<std::size_t>(j)];
        const double* row = &p.a[static_cast<std::size_t>(j) * channels];
        for (int c = 0; c < channels; ++c) pre += row[c] * x[c];
        y += p.outer[static_cast<std::size_t>(j)] * std::tanh(pre);
    }
    return y;
}

double event_weight(const DriftEvent& e, int shot, int gradual_span) {
    switch (e.kind) {
        case DriftKind::kAbrupt: return shot >= e.shot_index ? 1.0 : 0.0;
        case DriftKind::kGradual: {
            double w = static_cast<double>(shot - e.shot_index) / gradual_span;
            return std::clamp(w, 0.0, 1.0);
        }
        case DriftKind::kNone: return 0.0;
    }
    return 0.0;
}

}  // namespace

std::vector<ShotRecord> generate_synthetic_stream(const SyntheticStreamConfig& config) {
    if (config.n_shots < 0 || config.shot_length < 1 || config.gradual_span < 1 ||
        !(config.noise_std >= 0.0))
        throw std::invalid_argument("generate_synthetic_stream: bad stream dimensions");
    int last_index = -1;
    for (const DriftEvent& e : config.schedule) {
        if (e.shot_index < last_index)
            throw std::invalid_argument("generate_synthetic_stream: drift schedule must be sorted");
        if (e.shot_index < 0 || e.shot_index >= config.n_shots)
            throw std::invalid_argument("generate_synthetic_stream: drift index out of range");
        if (!std::isfinite(e.magnitude))
            throw std::invalid_argument("generate_synthetic_stream: drift magnitude must be finite");
        last_index = e.shot_index;
    }

    const int channels = kInputChannels;
    Rng base_rng(mix_seed(mix_seed(config.seed, 0), 0));
    LatentParams base = draw_latent(base_rng, channels);
    std::vector<LatentParams> deltas;
    deltas.reserve(config.schedule.size());
    for (std::size_t e = 0; e < config.schedule.size(); ++e) {
        Rng event_rng(mix_seed(mix_seed(config.seed, 1), static_cast<std::uint64_t>(e)));
        deltas.push_back(draw_latent(event_rng, channels));
    }

    const double ar = 0.95;
    const double innovation = std::sqrt(1.0 - ar * ar);
    std::vector<ShotRecord> shots(static_cast<std::size_t>(config.n_shots));
#pragma omp parallel for schedule(static)
    for (int s = 0; s < config.n_shots; ++s) {
        LatentParams p = base;
        for (std::size_t e = 0; e < config.schedule.size(); ++e) {
            double w = event_weight(config.schedule[e], s, config.gradual_span) *
                       config.schedule[e].magnitude;
            if (w != 0.0) p.axpy(w, deltas[e]);
        }
        ShotRecord& shot = shots[static_cast<std::size_t>(s)];
        shot.shot_id = s;
        shot.channels = channels;
        shot.length = config.shot_length;
        shot.inputs.resize(static_cast<std::size_t>(channels) * config.shot_length);
        shot.target.resize(static_cast<std::size_t>(config.shot_length));
        Rng rng(mix_seed(mix_seed(config.seed, 2), static_cast<std::uint64_t>(s)));
        for (int c = 0; c < channels; ++c) {
            double d = rng.normal();
            for (int t = 0; t < config.shot_length; ++t) {
                if (t > 0) d = ar * d + innovation * rng.normal();
                shot.input_at(c, t) = p.offset[static_cast<std::size_t>(c)] + d;
            }
        }
        std::vector<double> x(static_cast<std::size_t>(channels));
        for (int t = 0; t < config.shot_length; ++t) {
            for (int c = 0; c < channels; ++c) x[static_cast<std::size_t>(c)] = shot.input_at(c, t);
            shot.target[static_cast<std::size_t>(t)] =
                eval_map(p, x.data(), channels) + config.noise_std * rng.normal();
        }
    }
    return shots;
}

ChannelStandardizer fit_standardizer(const std::vector<ShotRecord>& shots) {
    ChannelStandardizer st;
    if (shots.empty()) return st;
    int channels = shots.front().channels;
    st.in_mean.assign(static_cast<std::size_t>(channels), 0.0);
    st.in_std.assign(static_cast<std::size_t>(channels), 0.0);
    std::int64_t n = 0;
    for (const ShotRecord& s : shots) {
        n += s.length;
        for (int c = 0; c < channels; ++c)
            for (int t = 0; t < s.length; ++t) st.in_mean[static_cast<std::size_t>(c)] += s.input_at(c, t);
        for (double y : s.target) st.y_mean += y;
    }
    for (double& m : st.in_mean) m /= static_cast<double>(n);
    st.y_mean /= static_cast<double>(n);
    double y_var = 0.0;
    for (const ShotRecord& s : shots) {
        for (int c = 0; c < channels; ++c)
            for (int t = 0; t < s.length; ++t) {
                double d = s.input_at(c, t) - st.in_mean[static_cast<std::size_t>(c)];
                st.in_std[static_cast<std::size_t>(c)] += d * d;
            }
        for (double y : s.target) y_var += (y - st.y_mean) * (y - st.y_mean);
    }
    for (double& v : st.in_std) {
        v = std::sqrt(v / static_cast<double>(n));
        if (v < 1e-12) v = 1.0;
    }
    st.y_std = std::sqrt(y_var / static_cast<double>(n));
    if (st.y_std < 1e-12) st.y_std = 1.0;
    st.valid = true;
    return st;
}

void apply_standardizer(const ChannelStandardizer& st, std::vector<ShotRecord>& shots) {
    if (!st.valid) throw std::invalid_argument("apply_standardizer: standardizer not fitted");
    for (ShotRecord& s : shots) {
        if (s.standardized)
            throw std::invalid_argument("apply_standardizer: shot " + std::to_string(s.shot_id) +
                                        " is already standardized");
        for (int c = 0; c < s.channels; ++c)
            for (int t = 0; t < s.length; ++t)
                s.input_at(c, t) =
                    (s.input_at(c, t) - st.in_mean[static_cast<std::size_t>(c)]) /
                    st.in_std[static_cast<std::size_t>(c)];
        for (double& y : s.target) y = (y - st.y_mean) / st.y_std;
        s.standardized = true;
    }
}

}  // namespace driftstream
