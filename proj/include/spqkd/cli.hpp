#ifndef SPQKD_CLI_HPP
#define SPQKD_CLI_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spqkd/calibrate.hpp"
#include "spqkd/config.hpp"
#include "spqkd/errors.hpp"
#include "spqkd/report.hpp"
#include "spqkd/security.hpp"
#include "spqkd/session.hpp"
#include "spqkd/timetag.hpp"

namespace spqkd::cli {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;  ///< empty: print the report only
    ReportFormat format = ReportFormat::Human;
    bool timings = false;
    unsigned threads = 1;
    std::vector<std::string> overrides;
    std::string stream_format = "binary";  ///< simulate: binary, csv, both or none
    std::string stream_path;               ///< analyze / g2
    std::string saturation_csv;            ///< characterize
    std::string lifetime_csv;              ///< characterize
};

namespace detail {

class Stopwatch {
public:
    explicit Stopwatch(RunReport& r) : report_(r), last_(std::chrono::steady_clock::now()) {}
    void lap(const std::string& stage) {
        const auto now = std::chrono::steady_clock::now();
        report_.timings_ms.emplace_back(stage, std::chrono::duration<double, std::milli>(now - last_).count());
        last_ = now;
    }

private:
    RunReport& report_;
    std::chrono::steady_clock::time_point last_;
};

inline Config load_config(const Options& o) {
    if (o.config_path.empty()) throw ConfigError("--config is required for this subcommand");
    Config c = Config::load(o.config_path);
    for (const auto& s : o.overrides) c.set(s);
    return c;
}

inline void echo_config(const Config& c, RunReport& r) {
    for (const auto& e : c.entries()) r.config_echo.emplace_back(e.section + "." + e.key, e.value);
}

inline std::string out_path(const Options& o, const std::string& name) {
    return (std::filesystem::path(o.out_dir) / name).string();
}

inline void write_file(const Options& o, RunReport& r, const std::string& name,
                       const std::function<void(std::ostream&)>& writer, bool binary = false) {
    if (o.out_dir.empty()) return;
    std::filesystem::create_directories(o.out_dir);
    const std::string path = out_path(o, name);
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw ConfigError("cannot write '" + path + "'");
    writer(f);
    r.outputs.push_back(path);
}

inline std::string dt_tag(double dt) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%gns", dt);
    return buf;
}

inline TimeTagStream load_stream(const std::string& path) {
    const bool csv = std::filesystem::path(path).extension() == ".csv";
    std::ifstream f(path, csv ? std::ios::in : std::ios::binary);
    if (!f) throw ConfigError("cannot open stream file '" + path + "'");
    TimeTagStream s = csv ? read_csv(f) : read_binary(f);
    if (!s.is_sorted()) s.sort();
    return s;
}

struct AnalysisSettings {
    std::optional<double> t0_ns;
    std::vector<double> deltas;
    std::vector<double> headline_deltas;
    double bin_width_ns = 1.0;
};

inline AnalysisSettings read_analysis(const Config& c) {
    AnalysisSettings a;
    if (c.has("analysis", "t0_ns")) a.t0_ns = c.get_double("analysis", "t0_ns");
    if (c.has("analysis", "delta_t_ns")) a.deltas = c.get_list("analysis", "delta_t_ns");
    else
        for (int i = 1; i <= 20; ++i) a.deltas.push_back(i);
    a.headline_deltas = c.has("analysis", "headline_delta_t_ns") ? c.get_list("analysis", "headline_delta_t_ns")
                                                                 : std::vector<double>{3.0, 9.0};
    a.bin_width_ns = c.get_double("analysis", "bin_width_ns", 1.0);
    return a;
}

// Histograms, filter scan and headline figures shared by simulate and analyze.
inline void analyze_stream(const TimeTagStream& stream, const std::vector<PulseRecord>& alice,
                           const SourceParams& source, const AnalysisSettings& a, const Options& o, RunReport& r,
                           Stopwatch& sw) {
    const double rep = source.rep_rate_hz;
    const auto hist = build_histogram(stream, rep, a.bin_width_ns);
    write_file(o, r, "histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, hist); });
    write_file(o, r, "histogram_apd1.csv",
               [&](std::ostream& os) { write_histogram_csv(os, build_histogram(stream, rep, a.bin_width_ns, {true, false})); });
    write_file(o, r, "histogram_apd2.csv",
               [&](std::ostream& os) { write_histogram_csv(os, build_histogram(stream, rep, a.bin_width_ns, {false, true})); });
    const double t0 = a.t0_ns ? *a.t0_ns : default_window_start(hist);
    r.add_headline("histogram_peak_ns", static_cast<double>(hist.argmax()) * hist.bin_width_ns);
    r.add_headline("window_t0_ns", t0);
    r.add_headline("detections", hist.total());
    sw.lap("histogram");

    std::vector<double> all = a.deltas;
    all.insert(all.end(), a.headline_deltas.begin(), a.headline_deltas.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    const auto rows = filter_scan(stream, alice, source, t0, all);
    std::vector<FilterScanRow> scan_rows;
    for (const auto& row : rows)
        if (std::find(a.deltas.begin(), a.deltas.end(), row.delta_t_ns) != a.deltas.end()) scan_rows.push_back(row);
    write_file(o, r, "scan.csv", [&](std::ostream& os) { write_scan_csv(os, scan_rows); });
    for (double dt : a.headline_deltas) {
        const auto it = std::find_if(rows.begin(), rows.end(), [&](const auto& row) { return row.delta_t_ns == dt; });
        const std::string tag = dt_tag(dt);
        r.add_headline("qber_" + tag, it->qber);
        r.add_headline("sifted_rate_bps_" + tag, it->sifted_rate_bps);
        r.add_headline("skr_bps_" + tag, it->skr_bps);
        r.add_headline("n_sifted_" + tag, static_cast<double>(it->n_sifted));
    }
    if (!a.headline_deltas.empty()) {
        const double dt = a.headline_deltas.front();
        const auto key = b92_sift(alice, apply_window(stream, {t0, dt}, rep), rep);
        write_file(o, r, "sifted_" + dt_tag(dt) + ".csv", [&](std::ostream& os) { write_sifted_csv(os, key); });
    }
    sw.lap("filter_scan");
}

} // namespace detail

/// `simulate`: run the B92 session and analyze its stream.
inline RunReport simulate(const Options& o) {
    RunReport r;
    r.command = "simulate";
    detail::Stopwatch sw(r);
    const Config c = detail::load_config(o);
    const ScenarioConfig scenario = read_scenario(c, o.seed);
    const auto analysis = detail::read_analysis(c);
    c.require_all_used();
    detail::echo_config(c, r);
    r.seed = scenario.seed;
    r.add_headline("setup_transmission", scenario.channel.setup_transmission);
    r.add_headline("misalignment_deg", scenario.pol_misalignment_deg);
    r.add_headline("pulses", static_cast<double>(scenario.pulse_count()));
    sw.lap("config");

    const auto session = run_qkd_session(scenario, {o.threads});
    sw.lap("session");
    // Model expectations next to the measured figures, when the window start is fixed.
    if (analysis.t0_ns) {
        for (double dt : analysis.headline_deltas) {
            const FilterWindow w{*analysis.t0_ns, dt};
            const auto oracle = click_probability_oracle(scenario, w);
            r.add_headline("expected_qber_" + detail::dt_tag(dt), oracle.qber_exact);
            r.add_headline("expected_sifted_rate_bps_" + detail::dt_tag(dt),
                           oracle.p_sifted * scenario.source.rep_rate_hz / 2.0);
        }
    }
    if (o.stream_format == "binary" || o.stream_format == "both")
        detail::write_file(o, r, "stream.bin", [&](std::ostream& os) { write_binary(os, session.stream); }, true);
    if (o.stream_format == "csv" || o.stream_format == "both")
        detail::write_file(o, r, "stream.csv", [&](std::ostream& os) { write_csv(os, session.stream); });
    detail::analyze_stream(session.stream, session.alice, scenario.source, analysis, o, r, sw);
    return r;
}

/// `analyze`: histogram and filter scan of an existing stream file. The
/// config supplies the source timing and pattern; other sections of a
/// scenario config are ignored so the same file can drive both commands.
inline RunReport analyze(const Options& o) {
    RunReport r;
    r.command = "analyze";
    detail::Stopwatch sw(r);
    if (o.stream_path.empty()) throw ConfigError("analyze needs --stream");
    const Config c = detail::load_config(o);
    const SourceParams source = read_source(c);
    const auto pattern = parse_pattern(c.has("session", "pattern") ? c.get_string("session", "pattern") : "01");
    const auto analysis = detail::read_analysis(c);
    detail::echo_config(c, r);
    const TimeTagStream stream = detail::load_stream(o.stream_path);
    sw.lap("load");
    std::uint64_t pulses = 0;
    const auto period = static_cast<double>(period_ps(source.rep_rate_hz));
    for (auto it = stream.events.rbegin(); it != stream.events.rend(); ++it)
        if (it->channel == Channel::Trigger) {
            pulses = static_cast<std::uint64_t>(std::llround(static_cast<double>(it->t_ps) / period)) + 1;
            break;
        }
    if (pulses == 0) throw EmptyStream("stream has no trigger events");
    r.add_headline("pulses", static_cast<double>(pulses));
    detail::analyze_stream(stream, encode_pattern(pattern, pulses), source, analysis, o, r, sw);
    return r;
}

/// `sweep`: secret key rate versus channel loss for every configured curve.
inline RunReport sweep(const Options& o) {
    RunReport r;
    r.command = "sweep";
    detail::Stopwatch sw(r);
    const Config c = detail::load_config(o);
    const auto curves = read_curves(c);
    const auto grid = loss_grid(c.get_double("sweep", "loss_db_start", 0.0), c.get_double("sweep", "loss_db_stop"),
                                c.get_double("sweep", "loss_db_step"));
    c.require_all_used();
    detail::echo_config(c, r);
    for (const auto& curve : curves) {
        const auto rows = sweep_loss(curve.model, grid);
        detail::write_file(o, r, "sweep_" + curve.name + ".csv", [&](std::ostream& os) { write_sweep_csv(os, rows); });
        r.add_headline("q_" + curve.name, curve.model.q);
        r.add_headline("skr_bps_at_start_" + curve.name, rows.front().report.skr_bps);
        r.add_headline("qber_at_start_" + curve.name, rows.front().report.qber_expected);
        r.add_headline("cutoff_loss_db_" + curve.name, cutoff_loss(rows));
    }
    sw.lap("sweep");
    return r;
}

/// `characterize`: saturation and/or lifetime fits of supplied data.
inline RunReport characterize(const Options& o) {
    RunReport r;
    r.command = "characterize";
    detail::Stopwatch sw(r);
    if (o.saturation_csv.empty() && o.lifetime_csv.empty())
        throw ConfigError("characterize needs --saturation and/or --lifetime");
    if (!o.saturation_csv.empty()) {
        std::ifstream f(o.saturation_csv);
        if (!f) throw ConfigError("cannot open '" + o.saturation_csv + "'");
        const auto fit = fit_saturation(read_power_rate_csv(f));
        r.config_echo.emplace_back("saturation", o.saturation_csv);
        r.add_headline("r_inf_hz", fit.model.r_inf_hz);
        r.add_headline("p_sat", fit.model.p_sat);
        r.add_headline("saturation_residual_rms_hz", fit.residual_rms);
        sw.lap("saturation");
    }
    if (!o.lifetime_csv.empty()) {
        std::ifstream f(o.lifetime_csv);
        if (!f) throw ConfigError("cannot open '" + o.lifetime_csv + "'");
        const auto fit = fit_lifetime(read_histogram_csv(f));
        r.config_echo.emplace_back("lifetime", o.lifetime_csv);
        r.add_headline("lifetime_ns", fit.lifetime_ns);
        r.add_headline("lifetime_uncertainty_ns", fit.uncertainty_ns);
        r.add_headline("lifetime_background", fit.background);
        r.add_headline("lifetime_tail_bins", static_cast<double>(fit.n_bins));
        sw.lap("lifetime");
    }
    return r;
}

/// `g2`: pulsed g2(0) from an HBT session (--config) or a stream file.
inline RunReport g2(const Options& o) {
    RunReport r;
    r.command = "g2";
    detail::Stopwatch sw(r);
    const Config c = detail::load_config(o);
    const int side = static_cast<int>(c.get_double("analysis", "side_peaks_per_side", 10.0));
    TimeTagStream stream;
    double rep = 0.0;
    if (o.stream_path.empty()) {
        const ScenarioConfig scenario = read_scenario(c, o.seed);
        c.require_all_used();
        r.seed = scenario.seed;
        rep = scenario.source.rep_rate_hz;
        stream = run_hbt_session(scenario, {o.threads});
        sw.lap("session");
        if (o.stream_format == "binary" || o.stream_format == "both")
            detail::write_file(o, r, "hbt_stream.bin", [&](std::ostream& os) { write_binary(os, stream); }, true);
        if (o.stream_format == "csv" || o.stream_format == "both")
            detail::write_file(o, r, "hbt_stream.csv", [&](std::ostream& os) { write_csv(os, stream); });
    } else {
        rep = c.get_double("source", "rep_rate_hz");
        stream = detail::load_stream(o.stream_path);
        sw.lap("load");
    }
    detail::echo_config(c, r);
    const auto est = estimate_g2(stream, rep, side);
    r.add_headline("g2_zero", est.value);
    r.add_headline("g2_uncertainty", est.uncertainty);
    r.add_headline("central_coincidences", est.central_counts);
    r.add_headline("side_peak_mean", est.side_mean);
    sw.lap("g2");
    return r;
}

/// Parses argv, dispatches, prints the report, and returns the exit status.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Single-photon QKD simulator and analysis toolkit"};
    app.require_subcommand(1);
    Options o;
    std::string format = "human";
    std::optional<std::uint64_t> seed;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "Scenario config file");
        sub->add_option("--seed", seed, "Master seed (overrides session.seed)");
        sub->add_option("--out-dir", o.out_dir, "Directory for output files");
        sub->add_option("--format", format, "Report format: human, csv, structured")
            ->check(CLI::IsMember({"human", "csv", "structured", "json"}));
        sub->add_option("--set", o.overrides, "Config override section.key=value (repeatable)");
        sub->add_flag("--timings", o.timings, "Include per-stage wall-clock timings in the report");
        sub->add_option("--threads", o.threads, "Worker threads for pulse generation")->check(CLI::PositiveNumber);
    };
    auto* sim = app.add_subcommand("simulate", "Run a B92 session and its filter-scan analysis");
    common(sim);
    sim->add_option("--stream-format", o.stream_format, "Stream output: binary, csv, both, none")
        ->check(CLI::IsMember({"binary", "csv", "both", "none"}));
    auto* ana = app.add_subcommand("analyze", "Analyze a recorded time-tag stream");
    common(ana);
    ana->add_option("--stream", o.stream_path, "Stream file (.csv or binary)")->required();
    auto* swp = app.add_subcommand("sweep", "Secret key rate versus channel loss");
    common(swp);
    auto* chr = app.add_subcommand("characterize", "Fit saturation and lifetime data");
    common(chr);
    chr->add_option("--saturation", o.saturation_csv, "CSV with header power,rate_hz");
    chr->add_option("--lifetime", o.lifetime_csv, "CSV with header bin_ns,counts");
    auto* g2c = app.add_subcommand("g2", "Estimate g2(0) from an HBT run");
    common(g2c);
    g2c->add_option("--stream", o.stream_path, "Use a recorded stream instead of simulating");
    g2c->add_option("--stream-format", o.stream_format, "Stream output: binary, csv, both, none")
        ->check(CLI::IsMember({"binary", "csv", "both", "none"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error[config]: " << e.what() << '\n';
        return exit_code(ErrorCategory::Config);
    }
    o.seed = seed;

    try {
        o.format = parse_report_format(format);
        RunReport report;
        if (sim->parsed()) report = simulate(o);
        else if (ana->parsed()) report = analyze(o);
        else if (swp->parsed()) report = sweep(o);
        else if (chr->parsed()) report = characterize(o);
        else report = g2(o);
        const std::string text = emit_report(report, o.format, o.timings);
        if (!o.out_dir.empty()) {
            std::filesystem::create_directories(o.out_dir);
            std::ofstream(detail::out_path(o, "report." + report_extension(o.format))) << text;
        }
        out << text;
        return 0;
    } catch (const Error& e) {
        static constexpr const char* names[] = {"config", "model", "fit"};
        err << "error[" << names[static_cast<int>(e.category())] << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << '\n';
        return 1;
    }
}

} // namespace spqkd::cli

#endif
