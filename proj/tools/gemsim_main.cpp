// gemsim command line: scenario-driven runs of the spectral, memory, events
// and lock modules, emitting CSV data files.
//
// Exit codes: 0 success, 2 scenario/usage error, 3 runtime/model error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gemsim/csv.hpp"
#include "gemsim/errors.hpp"
#include "gemsim/events.hpp"
#include "gemsim/lock.hpp"
#include "gemsim/memory.hpp"
#include "gemsim/scenario.hpp"
#include "gemsim/spectral.hpp"

namespace fs = std::filesystem;
using namespace gemsim;

namespace {

struct CommonArgs {
    std::string scenario;  // empty = builtin paper scenario
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    std::vector<std::string> overrides;
};

Scenario resolve_scenario(const CommonArgs& args) {
    if (args.scenario.empty() || args.scenario == "paper") {
        json j = paper_scenario_json();
        for (const auto& o : args.overrides) apply_override(j, o);
        return Scenario::from_json(std::move(j));
    }
    fs::path p(args.scenario);
    if (!fs::exists(p) && p.extension().empty() && p.filename() == p) {
        const char* dir = std::getenv("GEMSIM_SCENARIO_DIR");
        p = fs::path(dir ? dir : "scenarios") / (args.scenario + ".json");
    }
    return load_scenario(p, args.overrides);
}

fs::path out_path(const CommonArgs& args, const std::string& file) {
    fs::create_directories(args.out_dir);
    return fs::path(args.out_dir) / file;
}

void header(CsvWriter& csv, const std::string& subcommand, const CommonArgs& args,
            const Scenario& scenario, const json& section) {
    csv.comment("gemsim " + subcommand);
    csv.comment("scenario: " + scenario.name);
    csv.comment("seed: " + std::to_string(args.seed));
    csv.comment("config: " + section.dump());
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--scenario", args.scenario,
                    "Scenario file path or name (default: bundled 'paper')");
    cmd->add_option("--out", args.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--override", args.overrides,
                    "Override a scenario value, e.g. memory.coupling_strength=1e7");
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

int run_spectrum(const CommonArgs& args, const std::string& which) {
    const Scenario sc = resolve_scenario(args);
    const SpdcCombSpec comb = sc.spdc_comb();
    FilterChain chain;
    if (which == "herald") chain = sc.herald_chain();
    else if (which == "memory") chain = sc.memory_chain();
    else if (which == "control") chain = sc.control_chain();
    else if (which == "coincidence") chain = sc.coincidence_chain();
    else throw config_error("spectrum: unknown chain '" + which + "'");

    const FrequencyGrid grid = sc.grid();
    const auto psd = spdc_spectrum(comb, grid);
    const auto trans = chain_transmission(chain, grid);

    CsvWriter csv(out_path(args, "spectrum.csv").string());
    header(csv, "spectrum", args, sc, sc.raw.at("spectral"));
    csv.comment("chain: " + which);
    csv.columns({"frequency_hz", "spdc_power", "chain_transmission", "filtered_power"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        csv.row(grid.points[i], psd[i], trans[i], psd[i] * trans[i]);
    }
    csv.close();

    const auto frac = central_mode_fraction(comb, chain);
    const double ctrl_db = suppression_db(sc.control_chain(), sc.control_offset_hz());
    std::cout << "chain " << which << ": central_mode_fraction=" << frac.fraction
              << (frac.misaligned ? " (misaligned!)" : "")
              << " control_suppression_db=" << ctrl_db << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// store / lifetime
// ---------------------------------------------------------------------------

int run_store(const CommonArgs& args, double storage_time, const std::string& pulse_kind) {
    const Scenario sc = resolve_scenario(args);
    const GemConfig cfg = sc.gem_config();
    const ProtocolTemplate proto = sc.protocol_template();
    const PulseProfile pulse =
        pulse_kind == "coherent" ? sc.coherent_pulse() : sc.photon_pulse();

    ProtocolOptions opt;
    opt.lower_window = proto.lower_window;
    const TimingSchedule schedule = proto.make_schedule(storage_time);
    const ProtocolResult r = run_protocol(cfg, pulse, schedule, opt);

    CsvWriter csv(out_path(args, "store_trace.csv").string());
    header(csv, "store", args, sc, sc.raw.at("memory"));
    csv.comment("pulse: " + pulse_kind +
                ", storage_time_s: " + CsvWriter::format(storage_time));
    csv.columns({"time_s", "output_power", "gradient_sign", "control_on"});
    for (const auto& s : r.trace) {
        csv.row(s.time, s.output_power, s.gradient, static_cast<std::int64_t>(s.control_on));
    }
    csv.comment("efficiency_lower,efficiency_reported,efficiency_upper = " +
                CsvWriter::format(r.efficiency_lower) + "," +
                CsvWriter::format(r.efficiency_reported) + "," +
                CsvWriter::format(r.efficiency_upper));
    csv.comment("energy: input=" + CsvWriter::format(r.input_energy) +
                " transmitted=" + CsvWriter::format(r.transmitted_energy) +
                " recalled=" + CsvWriter::format(r.recalled_energy) +
                " decayed=" + CsvWriter::format(r.decayed_energy) +
                " residual=" + CsvWriter::format(r.residual_energy));
    csv.close();

    std::cout << "storage " << storage_time * 1e6 << " us (" << pulse_kind
              << "): eff lower/reported/upper = " << r.efficiency_lower << " / "
              << r.efficiency_reported << " / " << r.efficiency_upper
              << "  closure=" << r.energy_closure_error() << "\n";
    return 0;
}

int run_lifetime(const CommonArgs& args, std::vector<double> times,
                 const std::string& pulse_kind) {
    const Scenario sc = resolve_scenario(args);
    const GemConfig cfg = sc.gem_config();
    const ProtocolTemplate proto = sc.protocol_template();
    const PulseProfile pulse =
        pulse_kind == "coherent" ? sc.coherent_pulse() : sc.photon_pulse();
    if (times.empty()) times = sc.storage_times();

    const auto points = efficiency_vs_storage_time(cfg, pulse, proto, times);

    CsvWriter csv(out_path(args, "lifetime.csv").string());
    header(csv, "lifetime", args, sc, sc.raw.at("memory"));
    csv.comment("pulse: " + pulse_kind);
    csv.columns({"storage_time_s", "eff_lower", "eff_reported", "eff_upper"});
    for (const auto& p : points) {
        csv.row(p.storage_time, p.efficiency_lower, p.efficiency_reported, p.efficiency_upper);
        std::cout << "t=" << p.storage_time * 1e6 << " us reported=" << p.efficiency_reported
                  << "\n";
    }
    csv.close();
    return 0;
}

// ---------------------------------------------------------------------------
// counts
// ---------------------------------------------------------------------------

struct CountsResult {
    CoincidenceHistogram input, memory, noinput;
    NetHistogram net;
    std::array<EfficiencyResult, 3> eff;
};

CountsResult analyze_stream(const Scenario& sc, const EventStream& stream) {
    const auto stages = sequence_split(stream, sc.sequence_config(), sc.event_schedule());
    const CoincidenceWindow window = sc.coincidence_window();
    const double bw = sc.bin_width();
    CountsResult r;
    r.input = coincidence_histogram(stages[0], window, bw);
    r.memory = coincidence_histogram(stages[1], window, bw);
    r.noinput = coincidence_histogram(stages[2], window, bw);
    r.net = subtract_background(r.memory, r.noinput);
    r.eff = efficiency_estimate(r.input, r.net, sc.efficiency_windows());
    return r;
}

void write_counts_outputs(const CommonArgs& args, const Scenario& sc, const CountsResult& r) {
    auto dump_hist = [&](const std::string& file, const CoincidenceHistogram& h) {
        CsvWriter csv(out_path(args, file).string());
        header(csv, "counts", args, sc, sc.raw.at("events"));
        csv.comment("total_heralds: " + std::to_string(h.total_heralds) +
                    ", live_time_s: " + CsvWriter::format(h.live_time));
        csv.columns({"bin_start_s", "counts"});
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            csv.row(h.t0 + h.bin_width * static_cast<double>(i), h.counts[i]);
        }
        csv.close();
    };
    dump_hist("counts_input_hist.csv", r.input);
    dump_hist("counts_memory_hist.csv", r.memory);
    dump_hist("counts_noinput_hist.csv", r.noinput);

    {
        CsvWriter csv(out_path(args, "counts_net_hist.csv").string());
        header(csv, "counts", args, sc, sc.raw.at("events"));
        csv.comment("background scale: " + CsvWriter::format(r.net.scale));
        csv.columns({"bin_start_s", "net_counts", "sigma"});
        for (std::size_t i = 0; i < r.net.values.size(); ++i) {
            csv.row(r.net.t0 + r.net.bin_width * static_cast<double>(i), r.net.values[i],
                    std::sqrt(r.net.variances[i]));
        }
        csv.close();
    }
    {
        CsvWriter csv(out_path(args, "counts_summary.csv").string());
        header(csv, "counts", args, sc, sc.raw.at("events"));
        csv.columns({"window", "efficiency", "sigma", "net_counts", "background_counts",
                     "input_counts"});
        const char* names[3] = {"upper", "reported", "lower"};
        for (int k = 0; k < 3; ++k) {
            const auto& e = r.eff[static_cast<std::size_t>(k)];
            csv.row(names[k], e.value, e.sigma, e.raw_counts, e.background_counts,
                    e.input_counts);
        }
        csv.close();
    }
}

int run_counts(const CommonArgs& args, const std::string& ingest, const std::string& save_tags,
               const std::string& tag_format, double duration_override) {
    const Scenario sc = resolve_scenario(args);
    EventStream stream;
    if (!ingest.empty()) {
        stream = tag_format == "text" ? read_tag_file_text(ingest) : read_tag_file(ingest);
    } else {
        const double duration =
            duration_override > 0.0 ? duration_override : sc.counts_duration();
        TruthConfig truth = sc.truth_config();
        stream = generate_events(truth, sc.sequence_config(), sc.event_schedule(), duration,
                                 args.seed, sc.tag_resolution_fs());
    }
    if (!save_tags.empty()) {
        if (tag_format == "text") {
            write_tag_file_text(stream, out_path(args, save_tags).string());
        } else {
            write_tag_file(stream, out_path(args, save_tags).string());
        }
    }
    const CountsResult r = analyze_stream(sc, stream);
    write_counts_outputs(args, sc, r);
    const char* names[3] = {"upper", "reported", "lower"};
    for (int k = 0; k < 3; ++k) {
        const auto& e = r.eff[static_cast<std::size_t>(k)];
        std::cout << names[k] << ": " << e.value << " +- " << e.sigma << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// lock
// ---------------------------------------------------------------------------

int run_lock(const CommonArgs& args, long updates) {
    const Scenario sc = resolve_scenario(args);
    const ResonanceLandscape landscape = sc.landscape();
    const PhdParams params = sc.phd_params();
    if (updates <= 0) updates = sc.lock_updates();

    const LockRun run = simulate_lock(landscape, params, updates, args.seed);

    CsvWriter csv(out_path(args, "lock_trace.csv").string());
    header(csv, "lock", args, sc, sc.raw.at("lock"));
    csv.columns({"t_s", "offset_hz", "peak_hz", "counts"});
    for (const auto& s : run.series) csv.row(s.t, s.offset, s.true_peak, s.counts);
    csv.comment("rms_error_hz: " + CsvWriter::format(run.rms_error));
    csv.comment("steady_rms_error_hz: " + CsvWriter::format(run.steady_rms_error));
    csv.comment("capture_losses: " + std::to_string(run.capture_losses));
    csv.close();

    std::cout << "lock: rms=" << run.rms_error << " Hz steady_rms=" << run.steady_rms_error
              << " Hz capture_losses=" << run.capture_losses << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

struct TraceOnGrid {
    std::vector<double> centers;
    std::vector<double> power;
};

TraceOnGrid resample_trace(const ProtocolResult& r, double t_start, double bin_width,
                           std::size_t n_bins) {
    TraceOnGrid g;
    g.centers.resize(n_bins);
    g.power.assign(n_bins, 0.0);
    std::vector<double> weight(n_bins, 0.0);
    for (std::size_t i = 0; i < n_bins; ++i) {
        g.centers[i] = t_start + (static_cast<double>(i) + 0.5) * bin_width;
    }
    for (const auto& s : r.trace) {
        const double rel = s.time - t_start;
        if (rel < 0.0) continue;
        const auto b = static_cast<std::size_t>(rel / bin_width);
        if (b >= n_bins) continue;
        g.power[b] += s.output_power;
        weight[b] += 1.0;
    }
    for (std::size_t i = 0; i < n_bins; ++i) {
        if (weight[i] > 0.0) g.power[i] /= weight[i];
    }
    return g;
}

// Storage run + Monte Carlo coincidences with the simulated recall shape.
int reproduce_storage_figure(const CommonArgs& args, const Scenario& sc,
                             const std::string& file, const std::string& pulse_kind,
                             double storage_time) {
    const GemConfig cfg = sc.gem_config();
    const ProtocolTemplate proto = sc.protocol_template();
    const PulseProfile pulse =
        pulse_kind == "coherent" ? sc.coherent_pulse() : sc.photon_pulse();
    ProtocolOptions opt;
    opt.lower_window = proto.lower_window;
    const TimingSchedule schedule = proto.make_schedule(storage_time);
    const ProtocolResult sim = run_protocol(cfg, pulse, schedule, opt);

    const double flip = proto.write_duration;
    const double recall_on = flip + storage_time;
    const double readback = recall_on + proto.read_window;

    TruthConfig truth = sc.truth_config();
    truth.storage_delay = storage_time;
    truth.memory_efficiency_true = std::min(1.0, sim.efficiency_reported);
    truth.recall_shape = SampledShape::from_trace(sim.trace, recall_on, readback);

    TimingSchedule ev_sched;
    ev_sched.gradient_switch_duration = storage_time;
    ev_sched.events.push_back({0.0, +1, true});
    ev_sched.events.push_back({flip, -1, false});
    ev_sched.events.push_back({recall_on, -1, true});
    ev_sched.events.push_back({readback, +1, true});

    const double t_max = storage_time + proto.read_window;
    const double bw = sc.bin_width();
    EventStream stream = generate_events(truth, sc.sequence_config(), ev_sched,
                                         sc.counts_duration(), args.seed);
    const auto stages = sequence_split(stream, sc.sequence_config(), ev_sched);
    const auto hm = coincidence_histogram(stages[1], {0.0, t_max}, bw);
    const auto hb = coincidence_histogram(stages[2], {0.0, t_max}, bw);
    const auto net = subtract_background(hm, hb);

    // Simulated output resampled on the same herald-relative bins; in the
    // trace, delay zero corresponds to the gradient-flip trigger.
    const auto grid = resample_trace(sim, flip, bw, net.values.size());

    CsvWriter csv(out_path(args, file).string());
    header(csv, "reproduce", args, sc, sc.raw.at("memory"));
    csv.comment("pulse: " + pulse_kind + ", storage_time_s: " +
                CsvWriter::format(storage_time));
    csv.comment("sim efficiencies lower/reported/upper: " +
                CsvWriter::format(sim.efficiency_lower) + "," +
                CsvWriter::format(sim.efficiency_reported) + "," +
                CsvWriter::format(sim.efficiency_upper));
    csv.columns({"bin_start_s", "net_counts", "sigma", "sim_output_power"});
    for (std::size_t i = 0; i < net.values.size(); ++i) {
        csv.row(net.t0 + bw * static_cast<double>(i), net.values[i],
                std::sqrt(net.variances[i]), grid.power[i]);
    }
    csv.close();
    return 0;
}

int run_reproduce(const CommonArgs& args, const std::string& figure) {
    const Scenario sc = resolve_scenario(args);

    if (figure == "fig1c") {
        // Input photons: no_memory-stage coincidences plus the model shape.
        TruthConfig truth = sc.truth_config();
        EventStream stream = generate_events(truth, sc.sequence_config(), sc.event_schedule(),
                                             sc.counts_duration(), args.seed);
        const auto stages = sequence_split(stream, sc.sequence_config(), sc.event_schedule());
        const CoincidenceWindow window = sc.coincidence_window();
        const auto hist = coincidence_histogram(stages[0], window, sc.bin_width());
        CsvWriter csv(out_path(args, "fig1c.csv").string());
        header(csv, "reproduce fig1c", args, sc, sc.raw.at("events"));
        csv.columns({"bin_start_s", "counts", "model_input_density"});
        for (std::size_t i = 0; i < hist.counts.size(); ++i) {
            const double b0 = hist.t0 + hist.bin_width * static_cast<double>(i);
            const double mid = b0 + 0.5 * hist.bin_width;
            double model = 0.0;
            const auto& shape = truth.input_shape;
            if (mid >= shape.knots.front() && mid <= shape.knots.back()) {
                const auto it =
                    std::upper_bound(shape.knots.begin(), shape.knots.end(), mid);
                const std::size_t k =
                    std::min(static_cast<std::size_t>(it - shape.knots.begin()),
                             shape.knots.size() - 1);
                const double w = (mid - shape.knots[k - 1]) /
                                 (shape.knots[k] - shape.knots[k - 1]);
                model = shape.density[k - 1] + w * (shape.density[k] - shape.density[k - 1]);
            }
            csv.row(b0, hist.counts[i], model);
        }
        csv.close();
        return 0;
    }
    if (figure == "fig1d") {
        return reproduce_storage_figure(args, sc, "fig1d.csv", "photon",
                                        sc.truth_config().storage_delay);
    }
    if (figure == "fig1e") {
        return reproduce_storage_figure(args, sc, "fig1e.csv", "coherent",
                                        sc.truth_config().storage_delay);
    }
    if (figure == "fig2") {
        int rc = 0;
        int idx = 0;
        for (double t : sc.storage_times()) {
            CommonArgs a = args;
            a.seed = args.seed + static_cast<std::uint64_t>(idx);
            rc |= reproduce_storage_figure(a, sc, "fig2_t" + std::to_string(idx) + ".csv",
                                           "photon", t);
            ++idx;
        }
        return rc;
    }
    if (figure == "fig3" || figure == "figs4") {
        const GemConfig cfg = sc.gem_config();
        const ProtocolTemplate proto = sc.protocol_template();
        CsvWriter csv(out_path(args, figure + ".csv").string());
        header(csv, "reproduce " + figure, args, sc, sc.raw.at("memory"));
        csv.columns({"pulse", "storage_time_s", "eff_lower", "eff_reported", "eff_upper"});
        for (const char* kind : {"photon", "coherent"}) {
            const PulseProfile pulse = std::string(kind) == "coherent"
                                           ? sc.coherent_pulse()
                                           : sc.photon_pulse();
            const auto pts = efficiency_vs_storage_time(cfg, pulse, proto, sc.storage_times());
            for (const auto& p : pts) {
                csv.row(kind, p.storage_time, p.efficiency_lower, p.efficiency_reported,
                        p.efficiency_upper);
            }
        }
        csv.close();
        return 0;
    }
    if (figure == "figs3") {
        const SpdcCombSpec comb = sc.spdc_comb();
        const FilterChain herald = sc.herald_chain();
        FilterChain etalon_only, cavity_only;
        for (const auto& e : herald.elements) {
            if (e.kind == FilterElement::Kind::airy_etalon) etalon_only.elements.push_back(e);
            if (e.kind == FilterElement::Kind::lorentzian_cavity) {
                cavity_only.elements.push_back(e);
            }
        }
        auto emit = [&](const std::string& file, double span, std::size_t points) {
            const FrequencyGrid grid = FrequencyGrid::uniform(0.0, span, points);
            const auto psd = spdc_spectrum(comb, grid);
            CsvWriter csv(out_path(args, file).string());
            header(csv, "reproduce figs3", args, sc, sc.raw.at("spectral"));
            csv.columns({"frequency_hz", "spdc_power", "cavity_only", "etalon_only",
                         "combined", "filtered_power"});
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double f = grid.points[i];
                const double tc = cavity_only.transmission(f);
                const double te = etalon_only.transmission(f);
                csv.row(f, psd[i], tc, te, tc * te, psd[i] * tc * te);
            }
            csv.close();
        };
        emit("figs3.csv", 4e9, 40001);
        emit("figs3_central.csv", 4e6, 4001);
        return 0;
    }
    if (figure == "figs5") {
        TruthConfig truth = sc.truth_config();
        EventStream stream = generate_events(truth, sc.sequence_config(), sc.event_schedule(),
                                             sc.counts_duration(), args.seed);
        const auto stages = sequence_split(stream, sc.sequence_config(), sc.event_schedule());
        const CoincidenceWindow window = sc.coincidence_window();
        const auto hm = coincidence_histogram(stages[1], window, sc.bin_width());
        const auto hb = coincidence_histogram(stages[2], window, sc.bin_width());
        const auto net = subtract_background(hm, hb);
        CsvWriter csv(out_path(args, "figs5.csv").string());
        header(csv, "reproduce figs5", args, sc, sc.raw.at("events"));
        csv.comment("background scale: " + CsvWriter::format(net.scale));
        csv.columns({"bin_start_s", "raw_memory_counts", "scaled_noinput", "net_counts"});
        for (std::size_t i = 0; i < net.values.size(); ++i) {
            csv.row(net.t0 + net.bin_width * static_cast<double>(i), hm.counts[i],
                    static_cast<double>(hm.counts[i]) - net.values[i], net.values[i]);
        }
        csv.close();
        return 0;
    }
    throw config_error("reproduce: unknown figure '" + figure +
                       "' (expect fig1c|fig1d|fig1e|fig2|fig3|figs3|figs4|figs5)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gemsim: warm-vapour gradient echo memory simulator"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* spectrum = app.add_subcommand("spectrum", "Filter-chain and SPDC spectra");
    std::string chain_name = "herald";
    add_common(spectrum, args);
    spectrum->add_option("--chain", chain_name, "herald|memory|control|coincidence")
        ->capture_default_str();

    auto* store = app.add_subcommand("store", "One write/storage/recall protocol run");
    double storage_time = 4e-6;
    std::string pulse_kind = "photon";
    add_common(store, args);
    store->add_option("--storage-time", storage_time, "Storage time in seconds")
        ->capture_default_str();
    store->add_option("--pulse", pulse_kind, "photon|coherent")->capture_default_str();

    auto* lifetime = app.add_subcommand("lifetime", "Efficiency vs storage time sweep");
    std::vector<double> times;
    add_common(lifetime, args);
    lifetime->add_option("--times", times, "Storage times in seconds (default from scenario)");
    lifetime->add_option("--pulse", pulse_kind, "photon|coherent")->capture_default_str();

    auto* counts = app.add_subcommand("counts", "Generate and analyze coincidence data");
    std::string ingest, save_tags, tag_format = "binary";
    double duration = 0.0;
    add_common(counts, args);
    counts->add_option("--ingest", ingest, "Analyze an existing tag file instead of generating");
    counts->add_option("--save-tags", save_tags, "Write the generated tag file (name in --out)");
    counts->add_option("--tag-format", tag_format, "binary|text")->capture_default_str();
    counts->add_option("--duration", duration, "Acquisition length in seconds");

    auto* lock = app.add_subcommand("lock", "Closed-loop resonance tracking run");
    long updates = 0;
    add_common(lock, args);
    lock->add_option("--updates", updates, "Controller updates (default from scenario)");

    auto* reproduce = app.add_subcommand("reproduce", "Emit the data behind one figure");
    std::string figure;
    add_common(reproduce, args);
    reproduce->add_option("figure", figure, "fig1c|fig1d|fig1e|fig2|fig3|figs3|figs4|figs5")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (spectrum->parsed()) return run_spectrum(args, chain_name);
        if (store->parsed()) return run_store(args, storage_time, pulse_kind);
        if (lifetime->parsed()) return run_lifetime(args, times, pulse_kind);
        if (counts->parsed()) return run_counts(args, ingest, save_tags, tag_format, duration);
        if (lock->parsed()) return run_lock(args, updates);
        if (reproduce->parsed()) return run_reproduce(args, figure);
    } catch (const config_error& e) {
        std::cerr << "{\"error\":\"config\",\"message\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const invalid_parameter& e) {
        std::cerr << "{\"error\":\"invalid_parameter\",\"message\":\"" << e.what() << "\"}\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "{\"error\":\"io\",\"message\":\"" << e.what() << "\"}\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"runtime\",\"message\":\"" << e.what() << "\"}\n";
        return 3;
    }
    return 2;
}
