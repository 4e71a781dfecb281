#pragma once

#include <stdexcept>
#include <string>

namespace gemsim {

// Bad value passed to an operation (non-positive FSR, finesse <= 1, ...).
class invalid_parameter : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Grid too coarse for the narrowest spectral feature; results would alias.
class resolution_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solver produced NaN/Inf or was stepped outside its stability window.
class divergence_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Scenario / schedule inconsistency detected before a run starts.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Two histograms (or streams) cannot be combined: binning or window mismatch.
class incompatibility_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Event stream violates its own invariants (unsorted, out of range, ...).
class malformed_stream : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Efficiency requested with zero input counts.
class undefined_efficiency : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Degenerate data handed to a fitting routine.
class fit_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be read/written or has a bad header.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gemsim
