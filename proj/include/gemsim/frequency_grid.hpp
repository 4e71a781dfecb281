#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gemsim/errors.hpp"

namespace gemsim {

// Uniform frequency axis. Frequencies are offsets in Hz from a chosen
// reference (throughout this library: the probe transition).
struct FrequencyGrid {
    double center = 0.0;
    double span = 0.0;
    std::vector<double> points;

    static FrequencyGrid uniform(double center, double span, std::size_t n) {
        if (!(span > 0.0)) {
            throw invalid_parameter("FrequencyGrid: span must be > 0");
        }
        if (n < 2) {
            throw invalid_parameter("FrequencyGrid: need at least 2 points");
        }
        FrequencyGrid g;
        g.center = center;
        g.span = span;
        g.points.resize(n);
        const double f0 = center - 0.5 * span;
        const double step = span / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            g.points[i] = f0 + step * static_cast<double>(i);
        }
        g.validate();
        return g;
    }

    double spacing() const {
        if (points.size() < 2) {
            throw invalid_parameter("FrequencyGrid: spacing undefined for < 2 points");
        }
        return (points.back() - points.front()) / static_cast<double>(points.size() - 1);
    }

    std::size_t size() const { return points.size(); }

    // Strictly increasing and uniform to 1 part in 1e9.
    void validate() const {
        if (points.size() < 2 || !(span > 0.0)) {
            throw invalid_parameter("FrequencyGrid: empty or non-positive span");
        }
        const double step = spacing();
        if (!(step > 0.0)) {
            throw invalid_parameter("FrequencyGrid: points must be strictly increasing");
        }
        for (std::size_t i = 1; i < points.size(); ++i) {
            const double d = points[i] - points[i - 1];
            if (!(d > 0.0) || std::abs(d - step) > 1e-9 * std::abs(step)) {
                throw invalid_parameter("FrequencyGrid: spacing not uniform to 1e-9");
            }
        }
    }
};

} // namespace gemsim
