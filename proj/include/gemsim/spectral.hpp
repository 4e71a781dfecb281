#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "gemsim/errors.hpp"
#include "gemsim/frequency_grid.hpp"

namespace gemsim {

// Suppression figures saturate here instead of diverging when a chain
// transmission underflows to zero.
inline constexpr double kMaxSuppressionDb = 300.0;

// ---------------------------------------------------------------------------
// Elementary transmission profiles
// ---------------------------------------------------------------------------

// Air-spaced etalon, lossless mirrors: T = 1 / (1 + (2F/pi)^2 sin^2(pi d/FSR)).
// Peak exactly 1, FWHM ~= FSR/finesse, periodic in the detuning.
inline double airy_transmission(double fsr, double finesse, double detuning) {
    if (!(fsr > 0.0)) {
        throw invalid_parameter("airy_transmission: fsr must be > 0");
    }
    if (!(finesse > 1.0)) {
        throw invalid_parameter("airy_transmission: finesse must be > 1");
    }
    const double coeff = 2.0 * finesse / std::numbers::pi;
    const double s = std::sin(std::numbers::pi * (detuning / fsr));
    return 1.0 / (1.0 + coeff * coeff * s * s);
}

// Mode-cleaning cavity: comb of unit-peak Lorentzians of FWHM `linewidth`
// spaced by `fsr`. The infinite Lorentzian sum, normalised to a unit peak,
// has the closed form sinh^2(pi a) / (sinh^2(pi a) + sin^2(pi x)) with
// a = (w/2)/FSR and x = d/FSR, which we use directly.
inline double lorentzian_cavity_transmission(double fsr, double linewidth, double detuning) {
    if (!(fsr > 0.0)) {
        throw invalid_parameter("lorentzian_cavity_transmission: fsr must be > 0");
    }
    if (!(linewidth > 0.0) || !(linewidth < fsr)) {
        throw invalid_parameter("lorentzian_cavity_transmission: need 0 < linewidth < fsr");
    }
    const double a = 0.5 * linewidth / fsr;
    const double sh = std::sinh(std::numbers::pi * a);
    const double sn = std::sin(std::numbers::pi * (detuning / fsr));
    return (sh * sh) / (sh * sh + sn * sn);
}

// One Doppler-broadened absorption line, Beer-Lambert with a Gaussian
// profile: T = exp(-od * exp(-4 ln2 (d/w)^2)).
inline double absorption_line_transmission(double peak_od, double doppler_fwhm,
                                           double detuning_from_line) {
    if (!(peak_od >= 0.0)) {
        throw invalid_parameter("absorption_line_transmission: peak_od must be >= 0");
    }
    if (!(doppler_fwhm > 0.0)) {
        throw invalid_parameter("absorption_line_transmission: doppler_fwhm must be > 0");
    }
    const double u = detuning_from_line / doppler_fwhm;
    return std::exp(-peak_od * std::exp(-4.0 * std::numbers::ln2 * u * u));
}

// Convenience overload matching the (peak_od, line_center, width, detuning)
// call shape used in configs; the last argument is absolute frequency.
inline double absorption_cell_transmission(double peak_od, double line_center,
                                           double doppler_fwhm, double frequency) {
    return absorption_line_transmission(peak_od, doppler_fwhm, frequency - line_center);
}

// ---------------------------------------------------------------------------
// Filter elements and chains
// ---------------------------------------------------------------------------

struct SpectralLine {
    double center = 0.0;   // Hz, relative to the probe reference
    double fwhm = 0.0;     // Doppler FWHM, Hz
    double peak_od = 0.0;  // optical depth at line center
};

struct FilterElement {
    enum class Kind {
        airy_etalon,
        lorentzian_cavity,
        absorption_cell,
        edge_filter,
        flat_attenuator,
    };

    Kind kind = Kind::flat_attenuator;

    // etalon / cavity
    double fsr = 0.0;
    double finesse = 0.0;
    double linewidth = 0.0;
    double center_offset = 0.0;  // shifts the resonance comb; 0 = aligned to probe

    // absorption cell (one or more Gaussian lines, transmissions multiply)
    std::vector<SpectralLine> lines;

    // edge filter: attenuation grows linearly in dB beyond the cutoff
    double cutoff = 0.0;            // Hz
    double slope_db_per_hz = 0.0;   // dB per Hz past the cutoff

    // flat attenuator
    double attenuation_db = 0.0;

    std::string label;

    static FilterElement etalon(double fsr, double finesse, double center = 0.0) {
        FilterElement e;
        e.kind = Kind::airy_etalon;
        e.fsr = fsr;
        e.finesse = finesse;
        e.center_offset = center;
        e.validate();
        return e;
    }

    static FilterElement cavity(double fsr, double linewidth, double center = 0.0) {
        FilterElement e;
        e.kind = Kind::lorentzian_cavity;
        e.fsr = fsr;
        e.linewidth = linewidth;
        e.center_offset = center;
        e.validate();
        return e;
    }

    static FilterElement cell(std::vector<SpectralLine> lines) {
        FilterElement e;
        e.kind = Kind::absorption_cell;
        e.lines = std::move(lines);
        e.validate();
        return e;
    }

    static FilterElement edge(double cutoff, double slope_db_per_hz) {
        FilterElement e;
        e.kind = Kind::edge_filter;
        e.cutoff = cutoff;
        e.slope_db_per_hz = slope_db_per_hz;
        e.validate();
        return e;
    }

    static FilterElement attenuator(double db) {
        FilterElement e;
        e.kind = Kind::flat_attenuator;
        e.attenuation_db = db;
        e.validate();
        return e;
    }

    void validate() const {
        switch (kind) {
        case Kind::airy_etalon:
            if (!(fsr > 0.0)) throw invalid_parameter("etalon: fsr must be > 0");
            if (!(finesse > 1.0)) throw invalid_parameter("etalon: finesse must be > 1");
            break;
        case Kind::lorentzian_cavity:
            if (!(fsr > 0.0)) throw invalid_parameter("cavity: fsr must be > 0");
            if (!(linewidth > 0.0) || !(linewidth < fsr)) {
                throw invalid_parameter("cavity: need 0 < linewidth < fsr");
            }
            break;
        case Kind::absorption_cell:
            if (lines.empty()) throw invalid_parameter("cell: needs at least one line");
            for (const auto& l : lines) {
                if (!(l.peak_od >= 0.0)) throw invalid_parameter("cell: peak_od must be >= 0");
                if (!(l.fwhm > 0.0)) throw invalid_parameter("cell: line fwhm must be > 0");
            }
            break;
        case Kind::edge_filter:
            if (!(slope_db_per_hz >= 0.0)) {
                throw invalid_parameter("edge_filter: slope must be >= 0");
            }
            break;
        case Kind::flat_attenuator:
            if (!(attenuation_db >= 0.0)) {
                throw invalid_parameter("flat_attenuator: attenuation_db must be >= 0");
            }
            break;
        }
    }

    double transmission(double f) const {
        switch (kind) {
        case Kind::airy_etalon:
            return airy_transmission(fsr, finesse, f - center_offset);
        case Kind::lorentzian_cavity:
            return lorentzian_cavity_transmission(fsr, linewidth, f - center_offset);
        case Kind::absorption_cell: {
            double t = 1.0;
            for (const auto& l : lines) {
                t *= absorption_line_transmission(l.peak_od, l.fwhm, f - l.center);
            }
            return t;
        }
        case Kind::edge_filter: {
            const double excess = f - cutoff;
            if (excess <= 0.0) return 1.0;
            return std::pow(10.0, -0.1 * excess * slope_db_per_hz);
        }
        case Kind::flat_attenuator:
            return std::pow(10.0, -0.1 * attenuation_db);
        }
        return 1.0;
    }
};

struct FilterChain {
    std::vector<FilterElement> elements;
    std::string label;

    void validate() const {
        if (elements.empty()) {
            throw invalid_parameter("FilterChain: chain must not be empty");
        }
        for (const auto& e : elements) e.validate();
    }

    double transmission(double f) const {
        double t = 1.0;
        for (const auto& e : elements) t *= e.transmission(f);
        return t;
    }
};

// Pointwise chain transmissivity on a grid.
inline std::vector<double> chain_transmission(const FilterChain& chain,
                                              const FrequencyGrid& grid) {
    chain.validate();
    grid.validate();
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        out[i] = chain.transmission(grid.points[i]);
    }
    return out;
}

// -10 log10(T) at one frequency, saturated at kMaxSuppressionDb.
inline double suppression_db(const FilterChain& chain, double f) {
    chain.validate();
    const double t = chain.transmission(f);
    if (!(t > 0.0)) return kMaxSuppressionDb;
    return std::min(-10.0 * std::log10(t), kMaxSuppressionDb);
}

// Solve the flat-attenuator dB that brings `chain` (evaluated at `f`) up to
// `target_db` total. Clamped at zero when the rest of the chain already
// exceeds the target.
inline double solve_flat_attenuator_db(const FilterChain& chain, double target_db, double f) {
    const double rest = suppression_db(chain, f);
    return std::max(0.0, target_db - rest);
}

// ---------------------------------------------------------------------------
// SPDC frequency comb
// ---------------------------------------------------------------------------

struct SpdcCombSpec {
    enum class Envelope { sinc2, gaussian };

    double mode_spacing = 0.0;    // comb FSR, Hz
    double mode_linewidth = 0.0;  // per-mode FWHM, Hz
    double envelope_fwhm = 0.0;   // phase-matching envelope FWHM, Hz (inf = flat)
    double center_offset = 0.0;   // Hz
    Envelope envelope = Envelope::sinc2;

    void validate() const {
        if (!(mode_spacing > 0.0) || !(mode_linewidth > 0.0)) {
            throw invalid_parameter("SpdcCombSpec: spacing and linewidth must be > 0");
        }
        if (!(mode_linewidth < mode_spacing)) {
            throw invalid_parameter("SpdcCombSpec: mode_linewidth must be < mode_spacing");
        }
        if (!(envelope_fwhm > mode_spacing)) {
            throw invalid_parameter("SpdcCombSpec: envelope_fwhm must exceed mode_spacing");
        }
    }

    // Envelope weight at offset f from the comb center, normalised to 1 at 0.
    double envelope_weight(double f) const {
        if (std::isinf(envelope_fwhm)) return 1.0;
        if (envelope == Envelope::gaussian) {
            const double u = f / envelope_fwhm;
            return std::exp(-4.0 * std::numbers::ln2 * u * u);
        }
        // sinc^2 with the argument scaled so the half-power point sits at
        // +-fwhm/2; sinc^2(x0) = 1/2 at x0 ~= 1.391557.
        constexpr double kHalfPowerArg = 1.3915573810029568;
        const double x = 2.0 * kHalfPowerArg * f / envelope_fwhm;
        if (std::abs(x) < 1e-8) return 1.0 - x * x / 3.0;
        const double s = std::sin(x) / x;
        return s * s;
    }

    double mode_frequency(long long n) const {
        return center_offset + static_cast<double>(n) * mode_spacing;
    }

    // Unit-peak Lorentzian line profile of one mode.
    double mode_profile(double f, long long n) const {
        const double hw = 0.5 * mode_linewidth;
        const double d = f - mode_frequency(n);
        return hw * hw / (d * d + hw * hw);
    }
};

// Spectral power density of the comb on a uniform grid, normalised so the
// trapezoid integral over the grid is 1. Guard: at least 4 samples per mode
// linewidth, otherwise narrow modes alias between grid points.
inline std::vector<double> spdc_spectrum(const SpdcCombSpec& spec, const FrequencyGrid& grid) {
    spec.validate();
    grid.validate();
    const double step = grid.spacing();
    if (step > spec.mode_linewidth / 4.0) {
        throw resolution_error("spdc_spectrum: grid spacing exceeds mode_linewidth/4");
    }

    // Only modes within a few spacings of a grid point contribute above the
    // Lorentzian tail floor; 48 spacings keeps the truncation below 1e-6 of
    // the local density.
    const long long tail_modes = 48;
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double f = grid.points[i];
        const long long n0 = static_cast<long long>(
            std::llround((f - spec.center_offset) / spec.mode_spacing));
        double s = 0.0;
        for (long long n = n0 - tail_modes; n <= n0 + tail_modes; ++n) {
            s += spec.envelope_weight(spec.mode_frequency(n)) * spec.mode_profile(f, n);
        }
        out[i] = s;
    }

    double integral = 0.0;
    for (std::size_t i = 1; i < out.size(); ++i) {
        integral += 0.5 * (out[i] + out[i - 1]) * step;
    }
    if (!(integral > 0.0)) {
        throw divergence_error("spdc_spectrum: zero integrated power");
    }
    for (auto& v : out) v /= integral;
    return out;
}

// Number of comb modes whose envelope weight exceeds `threshold` of the peak.
inline long long spdc_mode_count(const SpdcCombSpec& spec, double threshold) {
    spec.validate();
    if (std::isinf(spec.envelope_fwhm)) {
        throw invalid_parameter("spdc_mode_count: flat envelope has unbounded support");
    }
    long long count = 0;
    const long long n_max = static_cast<long long>(
        std::ceil(12.0 * spec.envelope_fwhm / spec.mode_spacing));
    for (long long n = -n_max; n <= n_max; ++n) {
        if (spec.envelope_weight(spec.mode_frequency(n)) > threshold) ++count;
    }
    return count;
}

// ---------------------------------------------------------------------------
// Central-mode isolation
// ---------------------------------------------------------------------------

struct ModeFractionOptions {
    // The "full envelope" is truncated at this many envelope FWHMs; the raw
    // power excluded this way is < 3% and is suppressed by the chain by
    // orders of magnitude more, so it does not move the fraction.
    double envelope_halfwidths = 5.0;
    // Geometric ladder ratio for the per-mode integration grid.
    double ladder_ratio = 1.17;
    // Innermost grid offset in units of the mode linewidth.
    double core_step_fraction = 0.125;
};

struct ModeFractionResult {
    double fraction = 0.0;
    double transmitted_central = 0.0;  // same (arbitrary) units as total
    double transmitted_total = 0.0;
    bool misaligned = false;  // chain peak not at the central mode
};

namespace detail {

// Integration nodes for one comb segment [f_lo, f_hi] around mode center fc:
// a geometric ladder resolving the Lorentzian core plus explicit windows
// around every cavity resonance falling inside the segment.
inline void segment_nodes(const SpdcCombSpec& spec, const FilterChain& chain,
                          double fc, double f_lo, double f_hi,
                          const ModeFractionOptions& opt, std::vector<double>& nodes) {
    nodes.clear();
    nodes.push_back(f_lo);
    nodes.push_back(f_hi);
    nodes.push_back(fc);

    const double d0 = opt.core_step_fraction * spec.mode_linewidth;
    for (int side = -1; side <= 1; side += 2) {
        double d = d0;
        while (true) {
            const double f = fc + side * d;
            if (f < f_lo || f > f_hi) break;
            nodes.push_back(f);
            d *= opt.ladder_ratio;
        }
    }

    for (const auto& e : chain.elements) {
        if (e.kind != FilterElement::Kind::lorentzian_cavity) continue;
        const long long m_lo = static_cast<long long>(
            std::floor((f_lo - e.center_offset) / e.fsr));
        const long long m_hi = static_cast<long long>(
            std::ceil((f_hi - e.center_offset) / e.fsr));
        for (long long m = m_lo; m <= m_hi; ++m) {
            const double res = e.center_offset + static_cast<double>(m) * e.fsr;
            if (res < f_lo - 30.0 * e.linewidth || res > f_hi + 30.0 * e.linewidth) continue;
            for (int k = -24; k <= 24; ++k) {
                const double f = res + 0.25 * e.linewidth * static_cast<double>(k);
                if (f >= f_lo && f <= f_hi) nodes.push_back(f);
            }
        }
    }

    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
}

} // namespace detail

// Fraction of the chain-transmitted comb power lying within half a mode
// spacing of the central mode. Integrates mode by mode: each segment covers
// +-spacing/2 around one mode and carries that mode's Lorentzian.
inline ModeFractionResult central_mode_fraction(const SpdcCombSpec& spec,
                                                const FilterChain& chain,
                                                const ModeFractionOptions& opt = {}) {
    spec.validate();
    chain.validate();
    if (std::isinf(spec.envelope_fwhm)) {
        throw invalid_parameter("central_mode_fraction: envelope must be finite");
    }

    const long long n_max = static_cast<long long>(
        std::ceil(opt.envelope_halfwidths * spec.envelope_fwhm / spec.mode_spacing));

    ModeFractionResult result;
    std::vector<double> nodes;
    for (long long n = -n_max; n <= n_max; ++n) {
        const double fc = spec.mode_frequency(n);
        const double w = spec.envelope_weight(fc);
        const double f_lo = fc - 0.5 * spec.mode_spacing;
        const double f_hi = fc + 0.5 * spec.mode_spacing;
        detail::segment_nodes(spec, chain, fc, f_lo, f_hi, opt, nodes);

        double acc = 0.0;
        double prev_f = nodes.front();
        double prev_v = spec.mode_profile(prev_f, n) * chain.transmission(prev_f);
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            const double f = nodes[i];
            const double v = spec.mode_profile(f, n) * chain.transmission(f);
            acc += 0.5 * (v + prev_v) * (f - prev_f);
            prev_f = f;
            prev_v = v;
        }
        acc *= w;
        result.transmitted_total += acc;
        if (n == 0) result.transmitted_central = acc;
    }

    if (!(result.transmitted_total > 0.0)) {
        throw divergence_error("central_mode_fraction: chain transmits no power");
    }
    result.fraction = result.transmitted_central / result.transmitted_total;

    // Alignment check: the chain should peak on the central mode, not beside it.
    const double tc = chain.transmission(spec.center_offset);
    const double t_left = chain.transmission(spec.center_offset - spec.mode_linewidth);
    const double t_right = chain.transmission(spec.center_offset + spec.mode_linewidth);
    result.misaligned = tc < std::max(t_left, t_right);
    return result;
}

} // namespace gemsim
