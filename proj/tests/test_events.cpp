#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gemsim/events.hpp"

using namespace gemsim;

namespace {

TimingSchedule paper_like_schedule() {
    TimingSchedule s;
    s.gradient_switch_duration = 4e-6;
    s.events.push_back({0.0, +1, true});
    s.events.push_back({10e-6, -1, false});
    s.events.push_back({14e-6, -1, true});
    s.events.push_back({19e-6, +1, true});
    return s;
}

TruthConfig base_truth() {
    TruthConfig t = TruthConfig::standard();
    t.herald_rate = 4000.0;
    t.heralding_efficiency = 0.25;
    t.memory_efficiency_true = 0.84;
    t.storage_delay = 4e-6;
    t.background_rate = 7500.0;
    return t;
}

} // namespace

TEST_CASE("lossless limit: every herald has exactly one signal tag") {
    TruthConfig t = base_truth();
    t.background_rate = 0.0;
    t.heralding_efficiency = 1.0;
    t.memory_efficiency_true = 1.0;
    auto stream = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 11);
    std::size_t heralds = 0, signals = 0;
    double last_herald = -1.0;
    for (const auto& tag : stream.tags) {
        if (tag.channel == Channel::herald) {
            ++heralds;
            last_herald = stream.time_of(tag);
        } else {
            ++signals;
        }
    }
    CHECK(heralds > 1000);
    // Signals from heralds in no_input stages are suppressed; every other
    // herald contributes one, except any whose delayed twin fell past the end.
    std::size_t eligible = 0;
    const auto seq = SequenceConfig::standard();
    for (const auto& tag : stream.tags) {
        if (tag.channel != Channel::herald) continue;
        const double tt = stream.time_of(tag);
        const double phase = tt - seq.period * std::floor(tt / seq.period);
        if (seq.stages[seq.stage_at(phase)].label != Stage::Label::no_input &&
            tt < stream.duration - 20e-6) {
            ++eligible;
        }
    }
    CHECK(signals >= eligible * 99 / 100);
    CHECK(signals <= eligible + 64);
    (void)last_herald;
}

TEST_CASE("zero herald rate: only background, at the expected level") {
    TruthConfig t = base_truth();
    t.herald_rate = 0.0;
    t.background_rate = 10000.0;
    // 10 kc/s over the 0.4 s no_input stage: 4000 +- 63 expected per period.
    double mean = 0.0;
    const int n_seeds = 40;
    for (int s = 0; s < n_seeds; ++s) {
        auto stream =
            generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 100 + s);
        auto stages = sequence_split(stream, SequenceConfig::standard(), paper_like_schedule());
        mean += static_cast<double>(stages[2].events.tags.size());
    }
    mean /= n_seeds;
    CHECK(std::abs(mean - 4000.0) < 5.0 * 63.0 / std::sqrt(static_cast<double>(n_seeds)));
}

TEST_CASE("determinism: identical seed gives bit-identical streams") {
    TruthConfig t = base_truth();
    auto a = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 7);
    auto b = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 7);
    REQUIRE(a.tags.size() == b.tags.size());
    CHECK(a.tags == b.tags);
    auto c = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 8);
    CHECK(a.tags != c.tags);
}

TEST_CASE("all emitted tags are quantized to the stream resolution") {
    auto stream = generate_events(base_truth(), SequenceConfig::standard(),
                                  paper_like_schedule(), 2.0, 3);
    CHECK(stream.resolution_fs == kDefaultResolutionFs);
    stream.validate();  // would throw on unsorted/out-of-range tags
    CHECK(stream.tags.size() > 10000);

    SUBCASE("a custom resolution is applied at generation time") {
        auto coarse = generate_events(base_truth(), SequenceConfig::standard(),
                                      paper_like_schedule(), 2.0, 3, 1000000000);
        CHECK(coarse.resolution_fs == 1000000000);
        coarse.validate();
    }
}

TEST_CASE("sequence_split boundary conventions") {
    EventStream s;
    s.resolution_fs = 1000000000;  // 1 us ticks for exact boundaries
    s.duration = 4.0;
    SequenceConfig seq = SequenceConfig::standard();
    s.tags.push_back({0, Channel::herald});                   // t = 0: first stage
    s.tags.push_back({s.quantize(1.7), Channel::signal});     // no_input of period 1
    s.tags.push_back({s.quantize(2.0), Channel::herald});     // t = period: first stage again
    auto stages = sequence_split(s, seq, paper_like_schedule());
    CHECK(stages[0].events.tags.size() == 2);
    CHECK(stages[2].events.tags.size() == 1);

    EventStream bad = s;
    bad.tags.push_back({bad.quantize(5.0), Channel::signal});
    CHECK_THROWS_AS(sequence_split(bad, seq, paper_like_schedule()), malformed_stream);
}

TEST_CASE("split recovers per-stage counts within Poisson") {
    TruthConfig t = base_truth();
    auto stream = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 4.0, 21);
    auto stages = sequence_split(stream, SequenceConfig::standard(), paper_like_schedule());
    // no_memory stages: heralds at herald_rate * 0.8s; signals ~ h_eff each.
    double h0 = 0, s0 = 0;
    for (const auto& tag : stages[0].events.tags) {
        (tag.channel == Channel::herald ? h0 : s0) += 1.0;
    }
    CHECK(std::abs(h0 - 4000.0 * 0.8) < 5.0 * std::sqrt(4000.0 * 0.8));
    CHECK(std::abs(s0 - h0 * 0.25) < 5.0 * std::sqrt(h0 * 0.25));
    // live time: memory stage loses the herald-triggered off windows
    CHECK(stages[1].live_time < stages[1].wall_time);
    CHECK(stages[1].live_time > 0.9 * stages[1].wall_time);
    CHECK(stages[2].live_time == doctest::Approx(stages[2].wall_time));
}

TEST_CASE("coincidence histogram basics") {
    StageStream st;
    st.label = Stage::Label::memory;
    st.events.resolution_fs = 1000000;  // 1 ns
    st.events.duration = 1.0;
    st.wall_time = 1.0;
    st.live_time = 1.0;
    st.events.tags.push_back({st.events.quantize(0.1), Channel::herald});
    st.events.tags.push_back({st.events.quantize(0.1 + 5e-6), Channel::signal});

    auto h = coincidence_histogram(st, {0.0, 20e-6}, 1e-6);
    CHECK(h.counts.size() == 20);
    CHECK(h.counts[5] == 1);
    CHECK(h.total_counts() == 1);
    CHECK(h.total_heralds == 1);

    SUBCASE("no signal tags: all-zero histogram, heralds preserved") {
        st.events.tags.pop_back();
        auto h2 = coincidence_histogram(st, {0.0, 20e-6}, 1e-6);
        CHECK(h2.total_counts() == 0);
        CHECK(h2.total_heralds == 1);
    }

    SUBCASE("bin narrower than the resolution is rejected") {
        CHECK_THROWS_AS(coincidence_histogram(st, {0.0, 20e-6}, 1e-10), invalid_parameter);
    }
}

TEST_CASE("flat background coincidences match the analytic expectation") {
    // H heralds against a flat background r over window W: ~ H * r * W counts.
    TruthConfig t = base_truth();
    t.heralding_efficiency = 0.0;
    t.background_rate = 10000.0;
    TimingSchedule sched = paper_like_schedule();
    const SequenceConfig seq = SequenceConfig::standard();
    double total = 0.0, expected = 0.0;
    for (int s = 0; s < 100; ++s) {
        auto stream = generate_events(t, seq, sched, 2.0, 500 + s);
        auto stages = sequence_split(stream, seq, sched);
        auto h = coincidence_histogram(stages[2], {0.0, 20e-6}, 1e-6);
        total += static_cast<double>(h.total_counts());
        expected += static_cast<double>(h.total_heralds) * t.background_rate * 20e-6;
    }
    CHECK(std::abs(total - expected) < 5.0 * std::sqrt(expected));
}

TEST_CASE("histogram totals invariant under bin refinement") {
    TruthConfig t = base_truth();
    auto stream = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 42);
    auto stages = sequence_split(stream, SequenceConfig::standard(), paper_like_schedule());
    auto h1 = coincidence_histogram(stages[1], {0.0, 20e-6}, 2e-6);
    auto h2 = coincidence_histogram(stages[1], {0.0, 20e-6}, 0.25e-6);
    CHECK(h1.total_counts() == h2.total_counts());
}

TEST_CASE("background subtraction: scale, zero case, mismatch error") {
    CoincidenceHistogram mem;
    mem.bin_width = 1e-6;
    mem.t0 = 0.0;
    mem.counts = {9, 6, 3};
    mem.total_heralds = 10;
    mem.live_time = 1.2;
    mem.wall_time = 1.2;
    CoincidenceHistogram bg = mem;
    bg.counts = {3, 2, 1};
    bg.live_time = 0.4;
    bg.wall_time = 0.4;

    auto net = subtract_background(mem, bg);
    CHECK(net.scale == doctest::Approx(3.0));
    for (double v : net.values) CHECK(v == doctest::Approx(0.0));
    // Variance propagation uses the pooled no_input mean (stationary leak).
    const double pooled = (3.0 + 2.0 + 1.0) / 3.0;
    for (std::size_t i = 0; i < net.variances.size(); ++i) {
        CHECK(net.variances[i] == doctest::Approx(mem.counts[i] + 9.0 * pooled));
    }

    SUBCASE("identical histograms, scale 1: all-zero net") {
        bg.live_time = 1.2;
        bg.counts = mem.counts;
        auto n2 = subtract_background(mem, bg);
        for (double v : n2.values) CHECK(v == doctest::Approx(0.0));
    }

    SUBCASE("binning mismatch throws") {
        bg.bin_width = 2e-6;
        CHECK_THROWS_AS(subtract_background(mem, bg), incompatibility_error);
    }
}

TEST_CASE("pure background run: net bins consistent with zero") {
    TruthConfig t = base_truth();
    t.heralding_efficiency = 0.0;  // heralds continue, no real signal photons
    TimingSchedule sched = paper_like_schedule();
    const SequenceConfig seq = SequenceConfig::standard();
    long ok = 0, n = 0;
    for (int s = 0; s < 100; ++s) {
        auto stream = generate_events(t, seq, sched, 2.0, 900 + s);
        auto stages = sequence_split(stream, seq, sched);
        auto hm = coincidence_histogram(stages[1], {0.0, 20e-6}, 1e-6);
        auto hb = coincidence_histogram(stages[2], {0.0, 20e-6}, 1e-6);
        auto net = subtract_background(hm, hb);
        for (std::size_t i = 0; i < net.values.size(); ++i) {
            ++n;
            const double sigma = std::sqrt(net.variances[i]);
            if (std::abs(net.values[i]) <= 3.0 * sigma) ++ok;
        }
    }
    CHECK(static_cast<double>(ok) / static_cast<double>(n) >= 0.99);
}

TEST_CASE("efficiency estimate: analytic example and window ordering") {
    // 840 net recalled vs 1000 input counts, background-free, equal heralds.
    CoincidenceHistogram input;
    input.bin_width = 1e-6;
    input.t0 = 0.0;
    input.counts = {1000};
    input.total_heralds = 100000;
    input.live_time = input.wall_time = 1.0;

    NetHistogram net;
    net.bin_width = 1e-6;
    net.t0 = 0.0;
    net.values = {840.0};
    net.variances = {840.0};
    net.total_heralds = 100000;
    net.scale = 0.0;

    EfficiencyWindows w;
    w.window = {{{0.0, 1e-6}, {0.0, 1e-6}, {0.0, 1e-6}}};
    auto res = efficiency_estimate(input, net, w);
    CHECK(res[1].value == doctest::Approx(0.84).epsilon(1e-12));
    const double expect_sigma = 0.84 * std::sqrt(1.0 / 840.0 + 1.0 / 1000.0);
    CHECK(res[1].sigma == doctest::Approx(expect_sigma).epsilon(1e-9));
    CHECK(res[1].sigma > 0.0);

    SUBCASE("recalled identical to input: efficiency 1") {
        net.values = {1000.0};
        net.variances = {1000.0};
        auto r1 = efficiency_estimate(input, net, w);
        CHECK(r1[1].value == doctest::Approx(1.0));
    }

    SUBCASE("zero input counts is an error") {
        input.counts = {0};
        CHECK_THROWS_AS(efficiency_estimate(input, net, w), undefined_efficiency);
    }
}

TEST_CASE("estimator pipeline: lower <= reported <= upper on synthetic data") {
    TruthConfig t = base_truth();
    TimingSchedule sched = paper_like_schedule();
    const SequenceConfig seq = SequenceConfig::standard();
    auto stream = generate_events(t, seq, sched, 4.0, 77);
    auto stages = sequence_split(stream, seq, sched);
    auto hi = coincidence_histogram(stages[0], {0.0, 9e-6}, 0.5e-6);
    auto hm = coincidence_histogram(stages[1], {0.0, 9e-6}, 0.5e-6);
    auto hb = coincidence_histogram(stages[2], {0.0, 9e-6}, 0.5e-6);
    auto net = subtract_background(hm, hb);
    // Nested windows: upper from the flip trigger, reported while the control
    // is back on, lower inside the recall support.
    EfficiencyWindows w;
    w.window = {{{0.0, 9e-6}, {4e-6, 9e-6}, {4.5e-6, 8.5e-6}}};
    auto res = efficiency_estimate(hi, net, w);
    CHECK(res[2].value <= res[1].value + 1e-12);
    CHECK(res[1].value <= res[0].value + 1e-12);
}

TEST_CASE("estimator recovers the true efficiency (single case smoke)") {
    TruthConfig t = base_truth();
    t.herald_rate = 1000.0;  // keeps accidental coincidences negligible
    t.memory_efficiency_true = 0.5;
    TimingSchedule sched = paper_like_schedule();
    const SequenceConfig seq = SequenceConfig::standard();
    double sum = 0.0, sum2 = 0.0;
    const int n_seeds = 30;
    for (int s = 0; s < n_seeds; ++s) {
        auto stream = generate_events(t, seq, sched, 4.0, 2000 + s);
        auto stages = sequence_split(stream, seq, sched);
        auto hi = coincidence_histogram(stages[0], {0.0, 9e-6}, 0.5e-6);
        auto hm = coincidence_histogram(stages[1], {0.0, 9e-6}, 0.5e-6);
        auto hb = coincidence_histogram(stages[2], {0.0, 9e-6}, 0.5e-6);
        auto net = subtract_background(hm, hb);
        EfficiencyWindows w;
        w.window = {{{0.0, 9e-6}, {4e-6, 9e-6}, {4.5e-6, 8.5e-6}}};
        auto res = efficiency_estimate(hi, net, w);
        sum += res[1].value;
        sum2 += res[1].value * res[1].value;
    }
    const double mean = sum / n_seeds;
    const double var = sum2 / n_seeds - mean * mean;
    const double se = std::sqrt(var / n_seeds);
    CHECK(std::abs(mean - 0.5) < 3.0 * se + 0.01);
}

TEST_CASE("tag file round trip is lossless") {
    TruthConfig t = base_truth();
    auto stream = generate_events(t, SequenceConfig::standard(), paper_like_schedule(), 2.0, 5);
    const std::string path = (std::filesystem::temp_directory_path() / "gemsim_tags.bin").string();
    write_tag_file(stream, path);
    auto back = read_tag_file(path);
    CHECK(back.resolution_fs == stream.resolution_fs);
    CHECK(back.tags == stream.tags);
    CHECK(back.duration == doctest::Approx(stream.duration).epsilon(1e-9));
    std::remove(path.c_str());
}
