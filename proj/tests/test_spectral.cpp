#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "gemsim/spectral.hpp"

using namespace gemsim;

namespace {

// Brute-force comb of Lorentzians, the independent oracle for the cavity
// closed form. Truncation at +-3000 orders leaves a relative tail < 1e-5.
double cavity_comb_oracle(double fsr, double linewidth, double detuning) {
    const double hw = 0.5 * linewidth;
    double sum = 0.0;
    for (long long n = -3000; n <= 3000; ++n) {
        const double d = detuning - static_cast<double>(n) * fsr;
        sum += hw * hw / (d * d + hw * hw);
    }
    double peak = 0.0;
    for (long long n = -3000; n <= 3000; ++n) {
        const double d = static_cast<double>(n) * fsr;
        peak += hw * hw / (d * d + hw * hw);
    }
    return sum / peak;
}

FilterChain paper_herald_chain() {
    FilterChain c;
    c.label = "herald";
    c.elements.push_back(FilterElement::etalon(75e9, 15.0));
    c.elements.push_back(FilterElement::cavity(764e6, 1e6));
    return c;
}

SpdcCombSpec paper_comb() {
    SpdcCombSpec s;
    s.mode_spacing = 120.8e6;
    s.mode_linewidth = 429e3;
    s.envelope_fwhm = 100e9;
    return s;
}

} // namespace

TEST_CASE("airy transmission: resonance, anti-resonance, validation") {
    CHECK(airy_transmission(75e9, 15.0, 0.0) == doctest::Approx(1.0).epsilon(1e-12));

    // Closed-form Airy minimum at anti-resonance.
    const double expected_min = 1.0 / (1.0 + std::pow(2.0 * 15.0 / std::numbers::pi, 2));
    CHECK(airy_transmission(75e9, 15.0, 37.5e9) == doctest::Approx(expected_min).epsilon(1e-12));
    CHECK(expected_min == doctest::Approx(0.01085).epsilon(1e-3));

    // Dense scan confirms the anti-resonance is the global minimum.
    double scan_min = 1.0;
    for (int i = 0; i <= 20000; ++i) {
        const double d = 75e9 * static_cast<double>(i) / 20000.0;
        scan_min = std::min(scan_min, airy_transmission(75e9, 15.0, d));
    }
    CHECK(scan_min == doctest::Approx(expected_min).epsilon(1e-6));

    CHECK_THROWS_AS(airy_transmission(-1.0, 15.0, 0.0), invalid_parameter);
    CHECK_THROWS_AS(airy_transmission(75e9, 1.0, 0.0), invalid_parameter);
}

TEST_CASE("airy FWHM equals FSR/finesse within one grid step") {
    const double fsr = 75e9;
    const double finesse = 15.0;
    const double step = 10e6;
    // Walk outward from the peak to the half-power crossing.
    double fwhm = 0.0;
    for (double d = 0.0; d < fsr / 2; d += step) {
        if (airy_transmission(fsr, finesse, d) < 0.5) {
            fwhm = 2.0 * d;
            break;
        }
    }
    CHECK(std::abs(fwhm - fsr / finesse) <= 2.0 * step);
}

TEST_CASE("airy periodicity to 1e-12 relative") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double fsr = 1e6 + u(rng) * 1e11;
        const double finesse = 1.5 + u(rng) * 500.0;
        const double d = (u(rng) - 0.5) * fsr;
        const int k = static_cast<int>(u(rng) * 15.0) - 7;
        const double t0 = airy_transmission(fsr, finesse, d);
        const double tk = airy_transmission(fsr, finesse, d + k * fsr);
        CHECK(tk == doctest::Approx(t0).epsilon(1e-10));
    }
}

TEST_CASE("lorentzian cavity: resonance, half width, comb tail") {
    CHECK(lorentzian_cavity_transmission(764e6, 1e6, 0.0) == doctest::Approx(1.0));
    CHECK(lorentzian_cavity_transmission(764e6, 1e6, 0.5e6) == doctest::Approx(0.5).epsilon(1e-5));

    // Tail at the SPDC comb spacing, against the brute-force comb sum and the
    // single-Lorentzian tail estimate.
    const double t = lorentzian_cavity_transmission(877e6, 1.6e6, 120.8e6);
    CHECK(t == doctest::Approx(cavity_comb_oracle(877e6, 1.6e6, 120.8e6)).epsilon(1e-4));
    const double single_tail = std::pow(0.8e6 / 120.8e6, 2);
    CHECK(std::abs(t - single_tail) / single_tail < 0.10);

    CHECK_THROWS_AS(lorentzian_cavity_transmission(764e6, 765e6, 0.0), invalid_parameter);
}

TEST_CASE("absorption cell: calibration, transparency, empty cell") {
    // OD for 60 dB on-resonance suppression is 6 ln10.
    const double od = 6.0 * std::numbers::ln10;
    CHECK(od == doctest::Approx(13.8155).epsilon(1e-4));
    const double t0 = absorption_line_transmission(od, 500e6, 0.0);
    CHECK(-10.0 * std::log10(t0) == doctest::Approx(60.0).epsilon(1e-9));

    CHECK(absorption_line_transmission(od, 500e6, 1e12) == doctest::Approx(1.0));
    CHECK(absorption_line_transmission(0.0, 500e6, 0.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(absorption_line_transmission(-1.0, 500e6, 0.0), invalid_parameter);
}

TEST_CASE("chain transmission: dB rules and empty-chain error") {
    FrequencyGrid grid = FrequencyGrid::uniform(0.0, 2e9, 101);

    FilterChain flat;
    flat.elements.push_back(FilterElement::attenuator(10.0));
    auto t = chain_transmission(flat, grid);
    for (double v : t) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));

    const double od = 6.0 * std::numbers::ln10;
    FilterChain cells;
    cells.elements.push_back(FilterElement::cell({{0.0, 500e6, od}}));
    cells.elements.push_back(FilterElement::cell({{0.0, 500e6, od}}));
    CHECK(suppression_db(cells, 0.0) == doctest::Approx(120.0).epsilon(1e-9));

    FilterChain zero;
    zero.elements.push_back(FilterElement::attenuator(0.0));
    CHECK(suppression_db(zero, 123.0) == doctest::Approx(0.0));

    FilterChain empty;
    CHECK_THROWS_AS(chain_transmission(empty, grid), invalid_parameter);
}

TEST_CASE("suppression saturates at the documented cap") {
    FilterChain c;
    c.elements.push_back(FilterElement::attenuator(400.0));
    CHECK(suppression_db(c, 0.0) == doctest::Approx(kMaxSuppressionDb));
}

TEST_CASE("transmissivity stays in [0,1] for random elements and frequencies") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        FilterChain c;
        c.elements.push_back(FilterElement::etalon(1e6 + u(rng) * 1e11, 1.01 + u(rng) * 300.0));
        const double fsr = 1e6 + u(rng) * 1e9;
        c.elements.push_back(FilterElement::cavity(fsr, fsr * (0.001 + 0.9 * u(rng))));
        c.elements.push_back(FilterElement::cell({{(u(rng) - 0.5) * 1e10, 1e6 + u(rng) * 1e9, u(rng) * 20.0}}));
        c.elements.push_back(FilterElement::edge((u(rng) - 0.5) * 1e12, u(rng) * 1e-8));
        c.elements.push_back(FilterElement::attenuator(u(rng) * 100.0));
        for (int k = 0; k < 20; ++k) {
            const double f = (u(rng) - 0.5) * 1e12;
            const double t = c.transmission(f);
            CHECK(t >= 0.0);
            CHECK(t <= 1.0);
        }
    }
}

TEST_CASE("chain product is order independent") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    FilterChain c;
    c.elements.push_back(FilterElement::etalon(75e9, 15.0));
    c.elements.push_back(FilterElement::cavity(764e6, 1e6));
    c.elements.push_back(FilterElement::cell({{-6.8e9, 500e6, 13.8}}));
    c.elements.push_back(FilterElement::attenuator(7.0));

    FilterChain r = c;
    std::reverse(r.elements.begin(), r.elements.end());
    for (int k = 0; k < 200; ++k) {
        const double f = (u(rng) - 0.5) * 4e10;
        CHECK(c.transmission(f) == doctest::Approx(r.transmission(f)).epsilon(1e-12));
    }
}

TEST_CASE("spdc spectrum: normalization, flat-envelope limit, resolution guard") {
    SpdcCombSpec s;
    s.mode_spacing = 10e6;
    s.mode_linewidth = 400e3;
    s.envelope_fwhm = 100e6;

    // Grid covering 5x the envelope FWHM at linewidth/4 sampling.
    FrequencyGrid grid = FrequencyGrid::uniform(0.0, 500e6, 5001);
    auto psd = spdc_spectrum(s, grid);
    double integral = 0.0;
    for (std::size_t i = 1; i < psd.size(); ++i) {
        integral += 0.5 * (psd[i] + psd[i - 1]) * grid.spacing();
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

    // Flat envelope: all mode peaks equal.
    SpdcCombSpec flat = s;
    flat.envelope_fwhm = std::numeric_limits<double>::infinity();
    FrequencyGrid g2 = FrequencyGrid::uniform(0.0, 40e6, 2001);
    auto psd2 = spdc_spectrum(flat, g2);
    // Peaks at -20, -10, 0, +10, +20 MHz -> indices 0, 500, 1000, 1500, 2000.
    const double p0 = psd2[1000];
    CHECK(psd2[500] == doctest::Approx(p0).epsilon(1e-6));
    CHECK(psd2[1500] == doctest::Approx(p0).epsilon(1e-6));

    FrequencyGrid coarse = FrequencyGrid::uniform(0.0, 500e6, 101);
    CHECK_THROWS_AS(spdc_spectrum(s, coarse), resolution_error);
}

TEST_CASE("spdc mode count above 1% of peak is of order 1000") {
    const long long n = spdc_mode_count(paper_comb(), 0.01);
    CHECK(n >= 500);
    CHECK(n <= 5000);
}

TEST_CASE("central mode fraction: filtering-free baseline equals comb share") {
    SpdcCombSpec s;
    s.mode_spacing = 10e6;
    s.mode_linewidth = 400e3;
    s.envelope_fwhm = 60e6;

    FilterChain flat;
    flat.elements.push_back(FilterElement::attenuator(13.0));
    const auto r = central_mode_fraction(s, flat);

    // Independent estimate: envelope weights of the modes, each mode carrying
    // (almost) all of its Lorentzian power inside its own half-spacing.
    double total = 0.0;
    for (long long n = -60; n <= 60; ++n) {
        total += s.envelope_weight(static_cast<double>(n) * s.mode_spacing);
    }
    const double expected = 1.0 / total;
    CHECK(r.fraction == doctest::Approx(expected).epsilon(2e-3));
    CHECK_FALSE(r.misaligned);
}

TEST_CASE("central mode fraction: paper chain exceeds 0.76 and dual-arm beats single arms") {
    const auto comb = paper_comb();
    const auto herald = paper_herald_chain();

    FilterChain memory_arm;
    memory_arm.label = "memory";
    memory_arm.elements.push_back(FilterElement::etalon(75e9, 15.0));
    memory_arm.elements.push_back(FilterElement::cavity(877e6, 1.6e6));

    const auto f_herald = central_mode_fraction(comb, herald);
    CHECK(f_herald.fraction >= 0.76);

    const auto f_memory = central_mode_fraction(comb, memory_arm);

    FilterChain both = herald;
    both.elements.insert(both.elements.end(), memory_arm.elements.begin(),
                         memory_arm.elements.end());
    const auto f_both = central_mode_fraction(comb, both);
    CHECK(f_both.fraction > f_herald.fraction);
    CHECK(f_both.fraction > f_memory.fraction);
}

TEST_CASE("central mode fraction is monotone in cavity linewidth") {
    const auto comb = paper_comb();
    double prev = 0.0;
    for (double lw : {2e6, 1e6, 0.5e6}) {
        FilterChain c;
        c.elements.push_back(FilterElement::etalon(75e9, 15.0));
        c.elements.push_back(FilterElement::cavity(764e6, lw));
        const auto r = central_mode_fraction(comb, c);
        CHECK(r.fraction >= prev);
        prev = r.fraction;
    }
}

TEST_CASE("misaligned chain sets the warning flag") {
    const auto comb = paper_comb();
    FilterChain c;
    c.elements.push_back(FilterElement::cavity(764e6, 1e6, /*center=*/30e6));
    const auto r = central_mode_fraction(comb, c);
    CHECK(r.misaligned);
}

TEST_CASE("nearest surviving mode suppression matches a dense-grid scan") {
    const auto comb = paper_comb();
    const auto chain = paper_herald_chain();

    // Dense brute-force scan of the transmitted spectrum over +-2 GHz.
    const double spacing = comb.mode_spacing;
    double best_other = 0.0;
    double central = 0.0;
    const int n_pts = 800001;
    for (int i = 0; i < n_pts; ++i) {
        const double f = -2e9 + 4e9 * static_cast<double>(i) / (n_pts - 1);
        double raw = 0.0;
        const long long n0 = static_cast<long long>(std::llround(f / spacing));
        for (long long n = n0 - 3; n <= n0 + 3; ++n) {
            raw += comb.envelope_weight(comb.mode_frequency(n)) * comb.mode_profile(f, n);
        }
        const double v = raw * chain.transmission(f);
        if (std::abs(f) <= 0.5 * spacing) {
            central = std::max(central, v);
        } else {
            best_other = std::max(best_other, v);
        }
    }
    CHECK(best_other > 0.0);
    const double scan_suppression_db = 10.0 * std::log10(central / best_other);
    CHECK(scan_suppression_db > 30.0);

    // The per-mode view must agree: peak density of mode n relative to the
    // central mode, from envelope weight times chain transmission at center.
    double best_mode_db = 1e9;
    for (long long n = 1; n <= 16; ++n) {
        for (int sign : {-1, 1}) {
            const double fc = comb.mode_frequency(sign * n);
            const double rel = comb.envelope_weight(fc) * chain.transmission(fc) /
                               chain.transmission(0.0);
            best_mode_db = std::min(best_mode_db, -10.0 * std::log10(rel));
        }
    }
    CHECK(best_mode_db == doctest::Approx(scan_suppression_db).epsilon(0.05));
}

TEST_CASE("flat attenuator solve hits the requested aggregate") {
    const double od = 6.0 * std::numbers::ln10;
    FilterChain rest;
    rest.elements.push_back(FilterElement::cell({{-6.8e9, 500e6, od}}));
    rest.elements.push_back(FilterElement::cavity(877e6, 1.6e6));
    rest.elements.push_back(FilterElement::cell({{-6.8e9, 500e6, od / 3.0}}));
    rest.elements.push_back(FilterElement::edge(2.4e12, 1e-9));

    const double iris_db = solve_flat_attenuator_db(rest, 133.0, -6.8e9);
    CHECK(iris_db >= 0.0);

    FilterChain full = rest;
    full.elements.insert(full.elements.begin(), FilterElement::attenuator(iris_db));
    CHECK(suppression_db(full, -6.8e9) == doctest::Approx(133.0).epsilon(1e-9));
}
