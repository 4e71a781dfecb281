#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "gemsim/errors.hpp"
#include "gemsim/memory.hpp"

namespace gemsim {

// Default tagger resolution: 100.1 ps, stored exactly in femtoseconds.
inline constexpr std::uint64_t kDefaultResolutionFs = 100100;

enum class Channel : std::uint8_t { herald = 0, signal = 1 };

struct TimeTag {
    std::uint64_t tick = 0;  // multiples of the stream resolution
    Channel channel = Channel::herald;

    bool operator==(const TimeTag&) const = default;
};

struct EventStream {
    std::vector<TimeTag> tags;  // sorted by tick (herald before signal on ties)
    std::uint64_t resolution_fs = kDefaultResolutionFs;
    double duration = 0.0;  // s

    double resolution_s() const { return static_cast<double>(resolution_fs) * 1e-15; }
    double time_of(const TimeTag& t) const {
        return static_cast<double>(t.tick) * resolution_s();
    }
    std::uint64_t quantize(double t) const {
        return static_cast<std::uint64_t>(std::llround(t / resolution_s()));
    }

    void validate() const {
        if (resolution_fs == 0) throw malformed_stream("EventStream: zero resolution");
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (i > 0 && tags[i].tick < tags[i - 1].tick) {
                throw malformed_stream("EventStream: tags not sorted");
            }
            if (time_of(tags[i]) >= duration + 0.5 * resolution_s()) {
                throw malformed_stream("EventStream: tag outside [0, duration)");
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Measurement sequence
// ---------------------------------------------------------------------------

struct Stage {
    enum class Label { no_memory, memory, no_input };
    Label label = Label::no_memory;
    double duration = 0.0;
};

struct SequenceConfig {
    double period = 2.0;
    std::vector<Stage> stages;

    // The 2 s cycle: the memory is gated off for 0.1 s four times to sample
    // the injected rate, runs for 1.2 s total, and the final 0.4 s has the
    // input blocked for background characterisation.
    static SequenceConfig standard() {
        SequenceConfig s;
        s.period = 2.0;
        using L = Stage::Label;
        s.stages = {{L::no_memory, 0.1}, {L::memory, 0.3}, {L::no_memory, 0.1},
                    {L::memory, 0.3},   {L::no_memory, 0.1}, {L::memory, 0.3},
                    {L::no_memory, 0.1}, {L::memory, 0.3},   {L::no_input, 0.4}};
        return s;
    }

    void validate() const {
        if (stages.empty()) throw config_error("SequenceConfig: no stages");
        double sum = 0.0;
        for (const auto& st : stages) {
            if (!(st.duration > 0.0)) throw config_error("SequenceConfig: non-positive stage");
            sum += st.duration;
        }
        if (std::abs(sum - period) > 1e-9 * period) {
            throw config_error("SequenceConfig: stage durations must sum to the period");
        }
    }

    // Stage index for a phase in [0, period).
    std::size_t stage_at(double phase) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < stages.size(); ++i) {
            acc += stages[i].duration;
            if (phase < acc) return i;
        }
        return stages.size() - 1;
    }
};

// ---------------------------------------------------------------------------
// Shapes and truth configuration
// ---------------------------------------------------------------------------

// Piecewise-linear probability density on [knots.front(), knots.back()],
// sampled by inverse CDF. Used for the herald-relative arrival-time shapes.
struct SampledShape {
    std::vector<double> knots;    // strictly increasing times, s
    std::vector<double> density;  // >= 0, same length

    static SampledShape exp_rise(double fwhm, double cutoff, int n = 64) {
        SampledShape s;
        const double tau = fwhm / std::numbers::ln2;
        const double start = std::max(0.0, cutoff - 6.0 * tau);
        for (int i = 0; i <= n; ++i) {
            const double t = start + (cutoff - start) * i / n;
            s.knots.push_back(t);
            s.density.push_back(std::exp((t - cutoff) / tau));
        }
        s.normalize();
        return s;
    }

    static SampledShape from_trace(const std::vector<TraceSample>& trace, double t0,
                                   double t1) {
        SampledShape s;
        for (const auto& p : trace) {
            if (p.time < t0 || p.time > t1) continue;
            s.knots.push_back(p.time - t0);
            s.density.push_back(p.output_power);
        }
        if (s.knots.size() < 2) throw invalid_parameter("SampledShape: trace window empty");
        s.normalize();
        return s;
    }

    void validate() const {
        if (knots.size() < 2 || knots.size() != density.size()) {
            throw invalid_parameter("SampledShape: need >= 2 knots");
        }
        for (std::size_t i = 1; i < knots.size(); ++i) {
            if (!(knots[i] > knots[i - 1])) {
                throw invalid_parameter("SampledShape: knots must increase");
            }
        }
        for (double d : density) {
            if (!(d >= 0.0)) throw invalid_parameter("SampledShape: negative density");
        }
    }

    void normalize() {
        validate();
        cdf.assign(knots.size(), 0.0);
        for (std::size_t i = 1; i < knots.size(); ++i) {
            cdf[i] = cdf[i - 1] +
                     0.5 * (density[i] + density[i - 1]) * (knots[i] - knots[i - 1]);
        }
        const double total = cdf.back();
        if (!(total > 0.0)) throw invalid_parameter("SampledShape: zero total weight");
        for (auto& c : cdf) c /= total;
    }

    // Inverse-CDF draw; u uniform in [0,1).
    double sample(double u) const {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const std::size_t i = std::min(static_cast<std::size_t>(it - cdf.begin()),
                                       cdf.size() - 1);
        const double c0 = cdf[i - 1], c1 = cdf[i];
        const double w = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
        return knots[i - 1] + w * (knots[i] - knots[i - 1]);
    }

    std::vector<double> cdf;  // filled by normalize()
};

struct TruthConfig {
    double herald_rate = 2000.0;          // counts/s
    double heralding_efficiency = 0.25;   // P(signal twin detected | herald)
    double memory_efficiency_true = 0.84;
    double storage_delay = 4e-6;          // s
    double background_rate = 7500.0;      // counts/s on the signal channel
    SampledShape input_shape;             // herald-relative, no_memory stages
    SampledShape recall_shape;            // relative to herald + storage_delay

    static TruthConfig standard() {
        TruthConfig t;
        t.input_shape = SampledShape::exp_rise(1.5e-6, 6e-6);
        t.recall_shape = SampledShape::exp_rise(1.5e-6, 4e-6);
        std::reverse(t.recall_shape.density.begin(), t.recall_shape.density.end());
        t.recall_shape.normalize();
        return t;
    }

    void validate() const {
        if (!(herald_rate >= 0.0) || !(background_rate >= 0.0)) {
            throw invalid_parameter("TruthConfig: rates must be >= 0");
        }
        if (heralding_efficiency < 0.0 || heralding_efficiency > 1.0 ||
            memory_efficiency_true < 0.0 || memory_efficiency_true > 1.0) {
            throw invalid_parameter("TruthConfig: efficiencies must lie in [0,1]");
        }
        input_shape.validate();
        recall_shape.validate();
    }
};

// ---------------------------------------------------------------------------
// Event generation
// ---------------------------------------------------------------------------

namespace detail {

// Uniform double in [0,1) from the top 53 bits; keeps draws identical across
// standard library implementations.
inline double canonical(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double exp_gap(std::mt19937_64& rng, double rate) {
    return -std::log1p(-canonical(rng)) / rate;
}

// Merged control-off windows [t_h, t_h + off] for memory-stage heralds.
inline std::vector<std::pair<double, double>> off_windows(
    const std::vector<double>& memory_heralds, double off_duration) {
    std::vector<std::pair<double, double>> merged;
    for (double t : memory_heralds) {
        const double a = t, b = t + off_duration;
        if (!merged.empty() && a <= merged.back().second) {
            merged.back().second = std::max(merged.back().second, b);
        } else {
            merged.emplace_back(a, b);
        }
    }
    return merged;
}

inline bool in_windows(const std::vector<std::pair<double, double>>& w, double t) {
    auto it = std::upper_bound(w.begin(), w.end(), t,
                               [](double v, const auto& p) { return v < p.first; });
    if (it == w.begin()) return false;
    --it;
    return t >= it->first && t < it->second;
}

} // namespace detail

// Monte Carlo detection record for one acquisition run. Heralds arrive as a
// Poisson process throughout; the signal channel carries the heralded twin
// (input shape in no_memory stages, delayed recall shape in memory stages)
// plus leaked-control background over every control-on interval. Each
// memory-stage herald opens a control-off window of the schedule's storage
// span, during which no background is produced.
inline EventStream generate_events(const TruthConfig& truth, const SequenceConfig& seq,
                                   const TimingSchedule& schedule, double duration,
                                   std::uint64_t seed,
                                   std::uint64_t resolution_fs = kDefaultResolutionFs) {
    truth.validate();
    seq.validate();
    schedule.validate();
    if (!(duration >= seq.period)) {
        throw invalid_parameter("generate_events: duration must cover one full period");
    }
    if (resolution_fs == 0) {
        throw invalid_parameter("generate_events: zero resolution");
    }

    const double flip = schedule.first_flip_time();
    double control_off_span = truth.storage_delay;
    if (std::isfinite(flip)) {
        for (const auto& e : schedule.events) {
            if (e.time > flip && e.control_on) {
                control_off_span = e.time - flip;
                break;
            }
        }
    }

    std::mt19937_64 rng(seed);
    EventStream stream;
    stream.resolution_fs = resolution_fs;
    stream.duration = duration;

    using L = Stage::Label;
    std::vector<double> herald_times;
    std::vector<double> memory_heralds;
    std::vector<double> signal_times;

    // Heralds and their heralded signal photons, in time order.
    if (truth.herald_rate > 0.0) {
        double t = detail::exp_gap(rng, truth.herald_rate);
        while (t < duration) {
            herald_times.push_back(t);
            const double phase = t - seq.period * std::floor(t / seq.period);
            const L label = seq.stages[seq.stage_at(phase)].label;
            if (label == L::memory) memory_heralds.push_back(t);
            if (label != L::no_input) {
                const double u_det = detail::canonical(rng);
                const double u_shape = detail::canonical(rng);
                if (label == L::no_memory) {
                    if (u_det < truth.heralding_efficiency) {
                        const double ts = t + truth.input_shape.sample(u_shape);
                        if (ts < duration) signal_times.push_back(ts);
                    }
                } else {
                    if (u_det < truth.heralding_efficiency * truth.memory_efficiency_true) {
                        const double ts =
                            t + truth.storage_delay + truth.recall_shape.sample(u_shape);
                        if (ts < duration) signal_times.push_back(ts);
                    }
                }
            }
            t += detail::exp_gap(rng, truth.herald_rate);
        }
    }

    // Background over control-on time: memory stages minus per-herald off
    // windows, plus the whole no_input stage.
    const auto off = detail::off_windows(memory_heralds, control_off_span);
    if (truth.background_rate > 0.0) {
        const long n_periods = static_cast<long>(std::ceil(duration / seq.period));
        for (long p = 0; p < n_periods; ++p) {
            double stage_start = p * seq.period;
            for (const auto& st : seq.stages) {
                const double stage_end = stage_start + st.duration;
                if (st.label != L::no_memory && stage_start < duration) {
                    double t = stage_start + detail::exp_gap(rng, truth.background_rate);
                    while (t < std::min(stage_end, duration)) {
                        const bool gated =
                            st.label == L::memory && detail::in_windows(off, t);
                        if (!gated) signal_times.push_back(t);
                        t += detail::exp_gap(rng, truth.background_rate);
                    }
                }
                stage_start = stage_end;
            }
        }
    }

    stream.tags.reserve(herald_times.size() + signal_times.size());
    for (double t : herald_times) stream.tags.push_back({stream.quantize(t), Channel::herald});
    for (double t : signal_times) stream.tags.push_back({stream.quantize(t), Channel::signal});
    std::sort(stream.tags.begin(), stream.tags.end(), [](const TimeTag& a, const TimeTag& b) {
        if (a.tick != b.tick) return a.tick < b.tick;
        return a.channel < b.channel;
    });
    // Quantisation can nudge the last tag onto the duration boundary.
    while (!stream.tags.empty() && stream.time_of(stream.tags.back()) >= duration) {
        stream.tags.pop_back();
    }
    return stream;
}

// ---------------------------------------------------------------------------
// Stage splitting
// ---------------------------------------------------------------------------

struct StageStream {
    Stage::Label label = Stage::Label::no_memory;
    EventStream events;   // absolute times preserved
    double wall_time = 0.0;
    double live_time = 0.0;  // control-on time within the stage
    // Merged herald-triggered control-off intervals (memory stage only);
    // lets the histogram carry exact per-bin live-herald counts.
    std::vector<std::pair<double, double>> off_intervals;
};

// Assign every tag to its stage by time modulo the period (half-open stage
// intervals). Live time subtracts the herald-triggered control-off windows
// in memory stages; the same windows the generator uses are reconstructed
// from the herald tags themselves.
inline std::vector<StageStream> sequence_split(const EventStream& stream,
                                               const SequenceConfig& seq,
                                               const TimingSchedule& schedule) {
    stream.validate();
    seq.validate();
    if (!(stream.duration >= seq.period)) {
        throw malformed_stream("sequence_split: stream shorter than one period");
    }

    using L = Stage::Label;
    std::vector<StageStream> out(3);
    out[0].label = L::no_memory;
    out[1].label = L::memory;
    out[2].label = L::no_input;
    for (auto& s : out) {
        s.events.resolution_fs = stream.resolution_fs;
        s.events.duration = stream.duration;
    }

    auto bucket = [](L l) { return l == L::no_memory ? 0 : (l == L::memory ? 1 : 2); };

    std::vector<double> memory_heralds;
    for (const auto& tag : stream.tags) {
        const double t = stream.time_of(tag);
        const double phase = t - seq.period * std::floor(t / seq.period);
        const L label = seq.stages[seq.stage_at(phase)].label;
        out[bucket(label)].events.tags.push_back(tag);
        if (label == L::memory && tag.channel == Channel::herald) {
            memory_heralds.push_back(t);
        }
    }

    // Wall time per label over the covered duration.
    const long n_periods = static_cast<long>(std::ceil(stream.duration / seq.period));
    std::array<double, 3> wall{0.0, 0.0, 0.0};
    for (long p = 0; p < n_periods; ++p) {
        double stage_start = p * seq.period;
        for (const auto& st : seq.stages) {
            const double stage_end = stage_start + st.duration;
            const double overlap =
                std::max(0.0, std::min(stage_end, stream.duration) - stage_start);
            wall[static_cast<std::size_t>(bucket(st.label))] += overlap;
            stage_start = stage_end;
        }
    }

    double flip = schedule.first_flip_time();
    double control_off_span = 0.0;
    if (std::isfinite(flip)) {
        for (const auto& e : schedule.events) {
            if (e.time > flip && e.control_on) {
                control_off_span = e.time - flip;
                break;
            }
        }
    }
    const auto off = detail::off_windows(memory_heralds, control_off_span);
    double off_total = 0.0;
    for (const auto& [a, b] : off) off_total += std::min(b, stream.duration) - a;

    for (auto& s : out) {
        s.wall_time = wall[static_cast<std::size_t>(bucket(s.label))];
        s.live_time = s.wall_time;
        if (s.label == L::memory) {
            s.live_time = std::max(0.0, s.wall_time - off_total);
            s.off_intervals = off;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coincidence histograms
// ---------------------------------------------------------------------------

struct CoincidenceWindow {
    double t_min = 0.0;
    double t_max = 20e-6;
};

struct CoincidenceHistogram {
    double bin_width = 0.0;
    double t0 = 0.0;  // herald-relative window start
    std::vector<std::int64_t> counts;
    std::uint64_t total_heralds = 0;
    double live_time = 0.0;
    double wall_time = 0.0;
    // Per bin: number of heralds whose sample at this delay falls in
    // control-on time. Equals total_heralds everywhere when nothing is gated.
    std::vector<double> bin_live_heralds;

    std::int64_t total_counts() const {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

// Every signal tag within the herald-relative window increments its bin; all
// signals in a window count, for every herald (multi-coincidence policy). The
// first-tag-only alternative is available for sensitivity checks.
inline CoincidenceHistogram coincidence_histogram(const StageStream& stage,
                                                  const CoincidenceWindow& window,
                                                  double bin_width,
                                                  bool first_tag_only = false) {
    stage.events.validate();
    if (!(window.t_max > window.t_min)) {
        throw invalid_parameter("coincidence_histogram: empty window");
    }
    if (!(bin_width >= stage.events.resolution_s())) {
        throw invalid_parameter("coincidence_histogram: bin narrower than the tag resolution");
    }

    CoincidenceHistogram h;
    h.bin_width = bin_width;
    h.t0 = window.t_min;
    h.live_time = stage.live_time;
    h.wall_time = stage.wall_time;
    const std::size_t n_bins = static_cast<std::size_t>(
        std::ceil((window.t_max - window.t_min) / bin_width - 1e-12));
    h.counts.assign(n_bins, 0);

    std::vector<double> heralds, signals;
    for (const auto& tag : stage.events.tags) {
        (tag.channel == Channel::herald ? heralds : signals)
            .push_back(stage.events.time_of(tag));
    }
    h.total_heralds = heralds.size();

    std::size_t lo = 0;
    for (double th : heralds) {
        while (lo < signals.size() && signals[lo] < th + window.t_min) ++lo;
        for (std::size_t i = lo; i < signals.size(); ++i) {
            const double dt = signals[i] - th;
            if (dt >= window.t_max) break;
            const auto bin = static_cast<std::size_t>((dt - window.t_min) / bin_width);
            if (bin < h.counts.size()) ++h.counts[bin];
            if (first_tag_only) break;
        }
    }

    h.bin_live_heralds.assign(n_bins, static_cast<double>(h.total_heralds));
    if (!stage.off_intervals.empty()) {
        const auto& off = stage.off_intervals;
        for (double th : heralds) {
            // Off intervals overlapping this herald's delay window.
            auto it = std::upper_bound(off.begin(), off.end(), th + window.t_min,
                                       [](double v, const auto& p) { return v < p.second; });
            for (; it != off.end() && it->first < th + window.t_max; ++it) {
                // Gate every bin whose midpoint falls inside the interval.
                const double d0 = std::max(it->first - th, window.t_min);
                const double d1 = std::min(it->second - th, window.t_max);
                const double x0 = (d0 - window.t_min) / bin_width - 0.5;
                const double x1 = (d1 - window.t_min) / bin_width - 0.5;
                const long b0 = std::max(0L, static_cast<long>(std::ceil(x0 - 1e-9)));
                const long b1 = static_cast<long>(std::ceil(x1 - 1e-9)) - 1;
                for (long b = b0; b <= b1 && b < static_cast<long>(n_bins); ++b) {
                    h.bin_live_heralds[static_cast<std::size_t>(b)] -= 1.0;
                }
            }
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// Background subtraction
// ---------------------------------------------------------------------------

struct NetHistogram {
    double bin_width = 0.0;
    double t0 = 0.0;
    std::vector<double> values;     // negative bins preserved
    std::vector<double> variances;  // Poisson-propagated per bin
    std::uint64_t total_heralds = 0;
    double scale = 0.0;
};

// net = memory - scale * no_input. The aggregate scale is the ratio of
// control-on live times; when both histograms carry per-bin live-herald
// counts the subtraction is refined bin by bin, so delays gated off by the
// storage windows are not over-subtracted. Bins may go negative; clipping
// would bias the efficiency upward.
inline NetHistogram subtract_background(const CoincidenceHistogram& memory_hist,
                                        const CoincidenceHistogram& noinput_hist) {
    if (memory_hist.counts.size() != noinput_hist.counts.size() ||
        std::abs(memory_hist.bin_width - noinput_hist.bin_width) >
            1e-12 * memory_hist.bin_width ||
        std::abs(memory_hist.t0 - noinput_hist.t0) > 1e-12) {
        throw incompatibility_error("subtract_background: binning mismatch");
    }
    if (!(noinput_hist.live_time > 0.0)) {
        throw incompatibility_error("subtract_background: no_input live time is zero");
    }
    NetHistogram net;
    net.bin_width = memory_hist.bin_width;
    net.t0 = memory_hist.t0;
    net.total_heralds = memory_hist.total_heralds;
    net.scale = memory_hist.live_time / noinput_hist.live_time;

    const bool per_bin = memory_hist.bin_live_heralds.size() == memory_hist.counts.size() &&
                         noinput_hist.bin_live_heralds.size() == noinput_hist.counts.size();
    // The leaked-control background is stationary, so the pooled no_input
    // mean is the best per-bin estimate of its Poisson variance; the observed
    // bin alone underestimates it badly whenever a bin happens to be empty.
    const double pooled_noinput =
        static_cast<double>(noinput_hist.total_counts()) /
        static_cast<double>(noinput_hist.counts.size());
    net.values.resize(memory_hist.counts.size());
    net.variances.resize(memory_hist.counts.size());
    for (std::size_t i = 0; i < net.values.size(); ++i) {
        double s = net.scale;
        if (per_bin && noinput_hist.bin_live_heralds[i] > 0.0) {
            s = memory_hist.bin_live_heralds[i] / noinput_hist.bin_live_heralds[i];
        }
        const double m = static_cast<double>(memory_hist.counts[i]);
        const double b = static_cast<double>(noinput_hist.counts[i]);
        net.values[i] = m - s * b;
        net.variances[i] = m + s * s * pooled_noinput;
    }
    return net;
}

// ---------------------------------------------------------------------------
// Efficiency estimation
// ---------------------------------------------------------------------------

enum class WindowKind { upper, reported, lower };

struct EfficiencyResult {
    double value = 0.0;
    double sigma = 0.0;
    WindowKind window = WindowKind::reported;
    double raw_counts = 0.0;         // net recalled counts in the window
    double background_counts = 0.0;  // scaled background removed in the window
    std::int64_t input_counts = 0;
};

struct EfficiencyWindows {
    // Herald-relative intervals [lo, hi) for the three integration variants.
    std::array<std::pair<double, double>, 3> window{};  // upper, reported, lower
};

namespace detail {

struct WindowSum {
    double net = 0.0;
    double var = 0.0;
    double background = 0.0;
};

inline WindowSum sum_window(const NetHistogram& h, double lo, double hi) {
    WindowSum s;
    for (std::size_t i = 0; i < h.values.size(); ++i) {
        const double b0 = h.t0 + h.bin_width * static_cast<double>(i);
        const double b1 = b0 + h.bin_width;
        const double mid = 0.5 * (b0 + b1);
        if (mid < lo || mid >= hi) continue;
        s.net += h.values[i];
        s.var += h.variances[i];
        // var - val = scale (scale + 1) b, so the subtracted scale*b is:
        if (h.scale > 0.0) {
            s.background += (h.variances[i] - h.values[i]) / (h.scale + 1.0);
        }
    }
    return s;
}

} // namespace detail

// efficiency = (net recalled counts per herald) / (input counts per herald),
// with the errors on both count totals propagated in quadrature.
inline std::array<EfficiencyResult, 3> efficiency_estimate(
    const CoincidenceHistogram& input_hist, const NetHistogram& net_recall,
    const EfficiencyWindows& windows) {
    const std::int64_t input_counts = input_hist.total_counts();
    if (input_counts <= 0) {
        throw undefined_efficiency("efficiency_estimate: zero input counts");
    }
    if (input_hist.total_heralds == 0 || net_recall.total_heralds == 0) {
        throw undefined_efficiency("efficiency_estimate: no heralds");
    }

    const double input_per_herald =
        static_cast<double>(input_counts) / static_cast<double>(input_hist.total_heralds);

    std::array<EfficiencyResult, 3> out;
    const std::array<WindowKind, 3> kinds{WindowKind::upper, WindowKind::reported,
                                          WindowKind::lower};
    for (std::size_t k = 0; k < 3; ++k) {
        const auto [lo, hi] = windows.window[k];
        const auto sum = detail::sum_window(net_recall, lo, hi);
        const double recalled_per_herald =
            sum.net / static_cast<double>(net_recall.total_heralds);

        EfficiencyResult r;
        r.window = kinds[k];
        r.input_counts = input_counts;
        r.raw_counts = sum.net;
        r.background_counts = sum.background;
        r.value = recalled_per_herald / input_per_herald;
        // Relative errors of the two count totals, Poisson on each.
        const double rel_rec = sum.net != 0.0 ? std::sqrt(sum.var) / std::abs(sum.net) : 0.0;
        const double rel_in = 1.0 / std::sqrt(static_cast<double>(input_counts));
        r.sigma = std::abs(r.value) * std::sqrt(rel_rec * rel_rec + rel_in * rel_in);
        if (r.sigma == 0.0 && sum.var > 0.0) {
            r.sigma = std::sqrt(sum.var) / static_cast<double>(net_recall.total_heralds) /
                      input_per_herald;
        }
        out[k] = r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tag-file round trip
// ---------------------------------------------------------------------------

// Binary layout (little-endian): magic "GEMTAG1\0", u64 resolution_fs,
// u64 duration_ps, u64 count, then count records of (u64 tick, u8 channel).
inline void write_tag_file(const EventStream& stream, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("write_tag_file: cannot open " + path);
    const char magic[8] = {'G', 'E', 'M', 'T', 'A', 'G', '1', '\0'};
    out.write(magic, 8);
    auto put_u64 = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    put_u64(stream.resolution_fs);
    put_u64(static_cast<std::uint64_t>(std::llround(stream.duration * 1e12)));
    put_u64(stream.tags.size());
    for (const auto& tag : stream.tags) {
        put_u64(tag.tick);
        const auto ch = static_cast<unsigned char>(tag.channel);
        out.write(reinterpret_cast<const char*>(&ch), 1);
    }
    if (!out) throw io_error("write_tag_file: write failed for " + path);
}

// Plain-text variant: a "# GEMTAG1 resolution_fs=<u64> duration_ps=<u64>"
// header line, then one "tick channel" pair per line.
inline void write_tag_file_text(const EventStream& stream, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("write_tag_file_text: cannot open " + path);
    out << "# GEMTAG1 resolution_fs=" << stream.resolution_fs << " duration_ps="
        << static_cast<std::uint64_t>(std::llround(stream.duration * 1e12)) << "\n";
    for (const auto& tag : stream.tags) {
        out << tag.tick << ' ' << static_cast<int>(tag.channel) << '\n';
    }
    if (!out) throw io_error("write_tag_file_text: write failed for " + path);
}

inline EventStream read_tag_file_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("read_tag_file_text: cannot open " + path);
    std::string header;
    std::getline(in, header);
    EventStream stream;
    std::uint64_t duration_ps = 0;
    if (std::sscanf(header.c_str(), "# GEMTAG1 resolution_fs=%llu duration_ps=%llu",
                    reinterpret_cast<unsigned long long*>(&stream.resolution_fs),
                    reinterpret_cast<unsigned long long*>(&duration_ps)) != 2) {
        throw io_error("read_tag_file_text: bad header in " + path);
    }
    stream.duration = static_cast<double>(duration_ps) * 1e-12;
    std::uint64_t tick = 0;
    int channel = 0;
    while (in >> tick >> channel) {
        stream.tags.push_back({tick, static_cast<Channel>(channel)});
    }
    stream.validate();
    return stream;
}

inline EventStream read_tag_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("read_tag_file: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "GEMTAG1\0", 8) != 0) {
        throw io_error("read_tag_file: bad magic in " + path);
    }
    auto get_u64 = [&]() {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    };
    EventStream stream;
    stream.resolution_fs = get_u64();
    stream.duration = static_cast<double>(get_u64()) * 1e-12;
    const std::uint64_t count = get_u64();
    stream.tags.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        stream.tags[i].tick = get_u64();
        unsigned char ch = 0;
        in.read(reinterpret_cast<char*>(&ch), 1);
        stream.tags[i].channel = static_cast<Channel>(ch);
    }
    if (!in) throw io_error("read_tag_file: truncated file " + path);
    stream.validate();
    return stream;
}

} // namespace gemsim
