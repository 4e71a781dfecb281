#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "gemsim/errors.hpp"

namespace gemsim {

// ---------------------------------------------------------------------------
// Count-rate landscape
// ---------------------------------------------------------------------------

struct DriftModel {
    double linear_hz_per_s = 0.0;
    double sine_amplitude_hz = 0.0;
    double sine_period_s = std::numeric_limits<double>::infinity();

    double offset(double t) const {
        double d = linear_hz_per_s * t;
        if (sine_amplitude_hz != 0.0 && std::isfinite(sine_period_s)) {
            d += sine_amplitude_hz * std::sin(2.0 * std::numbers::pi * t / sine_period_s);
        }
        return d;
    }
};

// Single drifting double-resonance peak. The narrow (high-finesse) resonance
// sets the count-rate lineshape; the finesse values are carried as metadata.
struct ResonanceLandscape {
    double peak_rate = 5e4;     // counts/s on resonance
    double linewidth = 667e3;   // FWHM, Hz
    DriftModel drift;
    double red_finesse = 181.0;
    double blue_finesse = 8.5;

    void validate() const {
        if (!(peak_rate > 0.0)) throw invalid_parameter("ResonanceLandscape: peak_rate must be > 0");
        if (!(linewidth > 0.0)) throw invalid_parameter("ResonanceLandscape: linewidth must be > 0");
    }

    double rate_at(double offset, double t) const {
        const double d = 2.0 * (offset - drift.offset(t)) / linewidth;
        return peak_rate / (1.0 + d * d);
    }
};

// ---------------------------------------------------------------------------
// Dynamic-step hill climber
// ---------------------------------------------------------------------------

struct PhdParams {
    double gain_hz_per_count = 600.0;
    double step_min_hz = 5e4;
    double step_max_hz = 3e5;
    int n_cycles = 5;               // averaging depth per update
    double cycle_duration_s = 0.02;
    double capture_range_hz = 3.3e6;
    double initial_offset_hz = 0.0;
    bool poisson_noise = true;

    void validate() const {
        if (n_cycles < 1) throw invalid_parameter("PhdParams: n_cycles must be >= 1");
        if (!(step_min_hz > 0.0) || !(step_max_hz >= step_min_hz)) {
            throw invalid_parameter("PhdParams: need 0 < step_min <= step_max");
        }
        if (!(cycle_duration_s > 0.0)) {
            throw invalid_parameter("PhdParams: cycle duration must be > 0");
        }
        if (!(gain_hz_per_count >= 0.0)) {
            throw invalid_parameter("PhdParams: gain must be >= 0");
        }
    }
};

struct LockState {
    double offset = 0.0;        // current lock-point offset, Hz
    double step = 0.0;          // signed step applied on the last update
    double prev_average = 0.0;  // previous n-cycle averaged counts
    bool has_prev = false;
    std::vector<double> history;  // recent per-update averaged counts
    int n_cycles = 1;

    static LockState seeded(double initial_offset, double seed_step, int n_cycles) {
        LockState s;
        s.offset = initial_offset;
        s.step = seed_step;
        s.n_cycles = n_cycles;
        return s;
    }
};

// One controller update: the new step magnitude is proportional to the change
// in the averaged counts (clamped to [step_min, step_max]); the direction is
// kept after an increase and reversed after a decrease. Equal averages keep
// the direction at the clamp floor so the dither never stalls.
inline LockState phd_step(const LockState& state, double observed_mean_counts,
                          const PhdParams& params) {
    params.validate();
    if (state.step == 0.0) {
        throw invalid_parameter("phd_step: state needs a nonzero seed step");
    }
    LockState next = state;
    const double direction = state.step > 0.0 ? 1.0 : -1.0;
    if (!state.has_prev) {
        next.step = direction * params.step_min_hz;
    } else {
        const double delta = observed_mean_counts - state.prev_average;
        const double mag = std::clamp(params.gain_hz_per_count * std::abs(delta),
                                      params.step_min_hz, params.step_max_hz);
        next.step = (delta < 0.0 ? -direction : direction) * mag;
    }
    next.offset = state.offset + next.step;
    next.prev_average = observed_mean_counts;
    next.has_prev = true;
    next.history.push_back(observed_mean_counts);
    if (next.history.size() > 64) next.history.erase(next.history.begin());
    return next;
}

// ---------------------------------------------------------------------------
// Closed-loop simulation
// ---------------------------------------------------------------------------

struct LockSample {
    double t = 0.0;
    double offset = 0.0;
    double true_peak = 0.0;
    double counts = 0.0;  // averaged counts for this update
};

struct LockRun {
    std::vector<LockSample> series;
    double rms_error = 0.0;         // over the full run
    double steady_rms_error = 0.0;  // after the first 20% of updates
    double steady_offset_variance = 0.0;
    int capture_losses = 0;
};

inline LockRun simulate_lock(const ResonanceLandscape& landscape, const PhdParams& params,
                             long n_updates, std::uint64_t seed) {
    landscape.validate();
    params.validate();
    if (n_updates < 2) throw invalid_parameter("simulate_lock: need at least 2 updates");

    std::mt19937_64 rng(seed);
    // Random-sign first step; the magnitude starts at the clamp floor.
    const double sign = (rng() & 1ull) ? 1.0 : -1.0;
    LockState state =
        LockState::seeded(params.initial_offset_hz, sign * params.step_min_hz, params.n_cycles);

    LockRun run;
    run.series.reserve(static_cast<std::size_t>(n_updates));
    const double update_dt = params.cycle_duration_s * params.n_cycles;
    bool lost = false;

    for (long k = 0; k < n_updates; ++k) {
        const double t = k * update_dt;
        double acc = 0.0;
        for (int c = 0; c < params.n_cycles; ++c) {
            const double tc = t + c * params.cycle_duration_s;
            const double mean = landscape.rate_at(state.offset, tc) * params.cycle_duration_s;
            if (params.poisson_noise) {
                std::poisson_distribution<long> dist(mean);
                acc += static_cast<double>(dist(rng));
            } else {
                acc += mean;
            }
        }
        const double avg = acc / params.n_cycles;
        const double peak = landscape.drift.offset(t);
        run.series.push_back({t, state.offset, peak, avg});
        if (std::abs(state.offset - peak) > params.capture_range_hz) {
            if (!lost) ++run.capture_losses;
            lost = true;
        } else {
            lost = false;
        }
        state = phd_step(state, avg, params);
    }

    double sum2 = 0.0;
    for (const auto& s : run.series) {
        const double e = s.offset - s.true_peak;
        sum2 += e * e;
    }
    run.rms_error = std::sqrt(sum2 / static_cast<double>(run.series.size()));

    const std::size_t skip = run.series.size() / 5;
    double s2 = 0.0, mean_off = 0.0;
    for (std::size_t i = skip; i < run.series.size(); ++i) {
        const double e = run.series[i].offset - run.series[i].true_peak;
        s2 += e * e;
        mean_off += run.series[i].offset - run.series[i].true_peak;
    }
    const double n = static_cast<double>(run.series.size() - skip);
    run.steady_rms_error = std::sqrt(s2 / n);
    mean_off /= n;
    double var = 0.0;
    for (std::size_t i = skip; i < run.series.size(); ++i) {
        const double e = run.series[i].offset - run.series[i].true_peak - mean_off;
        var += e * e;
    }
    run.steady_offset_variance = var / n;
    return run;
}

} // namespace gemsim
