#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "scenarios.hpp"
#include "spqkd/cli.hpp"
#include "spqkd/spqkd.hpp"

using namespace spqkd;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = SPQKD_CONFIG_DIR;

struct CliResult {
    int code = 0;
    std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "spqkd");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

// headline rows of a CSV report
std::map<std::string, double> headlines(const std::string& csv) {
    std::map<std::string, double> out;
    std::istringstream is(csv);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("headline,", 0) != 0) continue;
        const auto second = line.find(',', 9);
        out[line.substr(9, second - 9)] = std::stod(line.substr(second + 1));
    }
    return out;
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spqkd_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

Config parse(const std::string& text) {
    std::istringstream is(text);
    return Config::parse(is);
}

} // namespace

TEST(Config, ParsesSectionsCommentsAndLists) {
    const auto c = parse("# header\n[source]\nmu = 0.5   # trailing\n\n[analysis]\ndelta_t_ns = 1, 2.5 ,9\n");
    EXPECT_EQ(c.get_double("source", "mu"), 0.5);
    EXPECT_EQ(c.get_list("analysis", "delta_t_ns"), (std::vector<double>{1.0, 2.5, 9.0}));
    EXPECT_EQ(c.sections(), (std::vector<std::string>{"source", "analysis"}));
    EXPECT_EQ(c.get_double("source", "missing", 4.0), 4.0);
}

TEST(Config, SchemaViolations) {
    EXPECT_THROW(parse("[a]\nx = 1\nx = 2\n"), ConfigError);
    EXPECT_THROW(parse("x = 1\n"), ConfigError);
    EXPECT_THROW(parse("[a\nx = 1\n"), ConfigError);
    EXPECT_THROW(parse("[a]\njust words\n"), ConfigError);
    EXPECT_THROW(parse("[]\n"), ConfigError);
    const auto c = parse("[a]\nx = abc\nn = -3\ntypo = 1\n");
    EXPECT_THROW(c.get_double("a", "x"), ConfigError);
    EXPECT_THROW(c.get_u64("a", "n"), ConfigError);
    EXPECT_THROW(c.get_double("a", "absent"), ConfigError);
    EXPECT_THROW(c.require_all_used(), ConfigError);
}

TEST(Config, OverridesReplaceOrAdd) {
    auto c = parse("[session]\nseed = 1\n");
    c.set("session.seed=9");
    c.set("link.q_calibration.delta_t_ns=3");
    EXPECT_EQ(c.get_u64("session", "seed"), 9u);
    EXPECT_EQ(c.get_double("link.q_calibration", "delta_t_ns"), 3.0);
    EXPECT_THROW(c.set("noequals"), ConfigError);
    EXPECT_THROW(c.set("nodot=3"), ConfigError);
}

TEST(Config, SeedIsNeverImplicit) {
    const auto c = parse("[session]\nduration_s = 1\n");
    EXPECT_THROW(read_seed(c, std::nullopt), ConfigError);
    EXPECT_EQ(read_seed(c, 5), 5u);
}

TEST(Config, CalibrationConflictsWithExplicitValues) {
    auto c = Config::load(kConfigs + "/paper_b92.cfg");
    c.set("session.misalignment_deg=3");
    EXPECT_THROW(read_scenario(c), ConfigError);
}

TEST(Config, GoldenScenarioMatchesFixture) {
    const auto c = Config::load(kConfigs + "/paper_b92.cfg");
    const auto s = read_scenario(c);
    const auto& f = fixtures::paper_scenario();
    EXPECT_EQ(s.seed, 42u);
    EXPECT_EQ(s.source.mu, f.source.mu);
    EXPECT_EQ(s.source.g2_zero, f.source.g2_zero);
    EXPECT_NEAR(s.channel.setup_transmission, f.channel.setup_transmission, 1e-12);
    EXPECT_NEAR(s.pol_misalignment_deg, f.pol_misalignment_deg, 1e-9);
    EXPECT_EQ(s.pattern, (std::vector<int>{0, 1}));
    EXPECT_EQ(s.duration_s, 2.5);
}

TEST(Config, GoldenFilesUseOnlyKnownKeys) {
    for (const char* name : {"fig5_solid.cfg", "fig5_dashed.cfg"}) {
        const auto c = Config::load(kConfigs + "/" + name);
        read_curves(c);
        c.get_double("sweep", "loss_db_start");
        c.get_double("sweep", "loss_db_stop");
        c.get_double("sweep", "loss_db_step");
        EXPECT_NO_THROW(c.require_all_used()) << name;
    }
}

TEST(Report, EmptyRunIsHeaderOnlyCsv) {
    EXPECT_EQ(emit_report(RunReport{}, ReportFormat::Csv), "section,key,value\n");
}

TEST(Report, EmissionIsStable) {
    RunReport r;
    r.command = "simulate";
    r.seed = 42;
    r.config_echo = {{"source.mu", "0.0234"}, {"session.pattern", "01"}};
    r.add_headline("qber_3ns", 0.0895);
    r.add_headline("sifted_rate_bps_3ns", 238.0);
    r.outputs = {"out/scan.csv"};
    r.timings_ms = {{"session", 12.5}};
    for (auto f : {ReportFormat::Human, ReportFormat::Csv, ReportFormat::Structured}) {
        EXPECT_EQ(emit_report(r, f), emit_report(r, f));
        EXPECT_EQ(emit_report(r, f).find("12.5"), std::string::npos);
        EXPECT_NE(emit_report(r, f, true).find("12.5"), std::string::npos);
    }
    const auto j = nlohmann::ordered_json::parse(emit_report(r, ReportFormat::Structured));
    EXPECT_EQ(j["seed"], 42);
    EXPECT_EQ(j["headline"]["qber_3ns"], 0.0895);
    EXPECT_EQ(j["config"].begin().key(), "source.mu");
    EXPECT_EQ(emit_report(r, ReportFormat::Csv),
              "section,key,value\nrun,command,simulate\nrun,seed,42\nconfig,source.mu,0.0234\n"
              "config,session.pattern,01\nheadline,qber_3ns,0.0895\nheadline,sifted_rate_bps_3ns,238\n"
              "output,path,out/scan.csv\n");
    EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

TEST(Cli, SimulatePaperScenario) {
    const auto a = run_cli({"simulate", "--config", kConfigs + "/paper_b92.cfg", "--seed", "42", "--format", "csv"});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = run_cli({"simulate", "--config", kConfigs + "/paper_b92.cfg", "--seed", "42", "--format", "csv"});
    EXPECT_EQ(a.out, b.out);

    const auto h = headlines(a.out);
    EXPECT_NEAR(h.at("expected_qber_3ns"), 0.0895, 1e-9);
    EXPECT_NEAR(h.at("expected_sifted_rate_bps_3ns"), 238.0, 0.05 * 238.0);
    EXPECT_NEAR(h.at("qber_3ns"), 0.0895, 0.025);
    EXPECT_NEAR(h.at("sifted_rate_bps_3ns"), 238.0, 0.2 * 238.0);
    EXPECT_NEAR(h.at("sifted_rate_bps_9ns"), 414.0, 0.2 * 414.0);
    EXPECT_EQ(h.at("histogram_peak_ns"), 148.0);
    EXPECT_EQ(h.at("pulses"), 2.5e6);
    EXPECT_EQ(a.out.find("timing_ms"), std::string::npos);
}

TEST(Cli, SimulateMatchesLibrary) {
    const auto r = run_cli({"simulate", "--config", kConfigs + "/paper_b92.cfg", "--format", "csv", "--set",
                            "session.duration_s=0.5", "--threads", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto cfg = fixtures::paper_scenario();
    cfg.duration_s = 0.5;
    const auto run = run_qkd_session(cfg);
    const auto rows = filter_scan(run.stream, run.alice, cfg.source, 148.0, {3.0, 9.0});
    const auto h = headlines(r.out);
    EXPECT_NEAR(h.at("qber_3ns"), rows[0].qber, 1e-9);
    EXPECT_NEAR(h.at("sifted_rate_bps_9ns"), rows[1].sifted_rate_bps, 1e-6);
    EXPECT_EQ(h.at("n_sifted_3ns"), static_cast<double>(rows[0].n_sifted));
}

TEST(Cli, SimulateWritesOutputsThatAnalyzeReproduces) {
    const auto dir = scratch_dir("simulate");
    const auto sim = run_cli({"simulate", "--config", kConfigs + "/paper_b92.cfg", "--out-dir", dir.string(),
                              "--format", "csv", "--stream-format", "both", "--set", "session.duration_s=0.5"});
    ASSERT_EQ(sim.code, 0) << sim.err;
    for (const char* f : {"stream.bin", "stream.csv", "histogram.csv", "histogram_apd1.csv", "histogram_apd2.csv",
                          "scan.csv", "sifted_3ns.csv", "report.csv"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(slurp(dir / "report.csv"), sim.out);
    EXPECT_EQ(slurp(dir / "scan.csv").substr(0, 39), "delta_t_ns,sifted_rate_bps,qber,skr_bps");

    const auto hs = headlines(sim.out);
    for (const char* stream : {"stream.bin", "stream.csv"}) {
        const auto ana = run_cli({"analyze", "--config", kConfigs + "/paper_b92.cfg", "--stream",
                                  (dir / stream).string(), "--format", "csv"});
        ASSERT_EQ(ana.code, 0) << ana.err;
        const auto ha = headlines(ana.out);
        for (const char* k : {"qber_3ns", "qber_9ns", "sifted_rate_bps_3ns", "skr_bps_9ns", "detections"})
            EXPECT_EQ(ha.at(k), hs.at(k)) << stream << " " << k;
    }
}

TEST(Cli, SweepMatchesLibrary) {
    const auto dir = scratch_dir("sweep");
    const auto r = run_cli({"sweep", "--config", kConfigs + "/fig5_solid.cfg", "--out-dir", dir.string(), "--format",
                            "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto c = Config::load(kConfigs + "/fig5_solid.cfg");
    const auto grid = loss_grid(0.0, 40.0, 0.25);
    for (const auto& curve : read_curves(c)) {
        std::ostringstream expected;
        write_sweep_csv(expected, sweep_loss(curve.model, grid));
        EXPECT_EQ(slurp(dir / ("sweep_" + curve.name + ".csv")), expected.str()) << curve.name;
        EXPECT_NEAR(headlines(r.out).at("q_" + curve.name), 0.08154959, 1e-7);
    }
}

TEST(Cli, CharacterizeIsThinWrapper) {
    const auto dir = scratch_dir("characterize");
    std::vector<PowerRatePoint> pts;
    {
        std::ofstream f(dir / "sat.csv");
        f << "power,rate_hz\n";
        for (double p : {0.1, 0.3, 0.7, 1.5, 3.0, 6.0, 12.0}) {
            const double r = saturation_rate(p, {495e3, 1.3}) * (1.0 + 0.01 * std::sin(7 * p));
            pts.push_back({p, r});
            f << p << ',' << std::setprecision(17) << r << '\n';
        }
    }
    DelayHistogram h;
    h.counts.assign(1000, 3.0);
    for (int k = 0; k < 60; ++k) h.counts[static_cast<std::size_t>(148 + k)] += std::round(4000.0 * std::exp(-k / 3.45));
    {
        std::ofstream f(dir / "life.csv");
        write_histogram_csv(f, h);
    }
    const auto r = run_cli({"characterize", "--saturation", (dir / "sat.csv").string(), "--lifetime",
                            (dir / "life.csv").string(), "--format", "csv"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto hl = headlines(r.out);
    const auto sat = fit_saturation(pts);
    const auto life = fit_lifetime(h);
    EXPECT_NEAR(hl.at("r_inf_hz"), sat.model.r_inf_hz, 1e-9 * sat.model.r_inf_hz);
    EXPECT_NEAR(hl.at("p_sat"), sat.model.p_sat, 1e-9 * sat.model.p_sat);
    EXPECT_NEAR(hl.at("lifetime_ns"), life.lifetime_ns, 1e-9);
}

TEST(Cli, G2FromGoldenConfig) {
    const auto r = run_cli({"g2", "--config", kConfigs + "/hbt_g2.cfg", "--format", "csv", "--stream-format", "none"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto h = headlines(r.out);
    EXPECT_NEAR(h.at("g2_zero"), 0.12, 0.03);
    EXPECT_GT(h.at("side_peak_mean"), 1e4);
}

TEST(Cli, TimingsOnlyOnRequest) {
    const auto r = run_cli({"sweep", "--config", kConfigs + "/fig5_solid.cfg", "--format", "csv", "--timings"});
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("timing_ms,sweep,"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"launch"}).code, 2);
    EXPECT_EQ(run_cli({"simulate"}).code, 2);
    EXPECT_EQ(run_cli({"simulate", "--config", "/nonexistent.cfg"}).code, 2);
    EXPECT_EQ(run_cli({"simulate", "--config", kConfigs + "/paper_b92.cfg", "--format", "xml"}).code, 2);

    const auto dir = scratch_dir("exit");
    {
        std::ofstream f(dir / "noseed.cfg");
        f << "[source]\nmu = 0.1\ng2_zero = 0\nlifetime_ns = 3.45\nrep_rate_hz = 1e6\n[session]\nduration_s = 0.01\n";
    }
    const auto noseed = run_cli({"simulate", "--config", (dir / "noseed.cfg").string()});
    EXPECT_EQ(noseed.code, 2);
    EXPECT_NE(noseed.err.find("error[config]"), std::string::npos);
    EXPECT_EQ(run_cli({"simulate", "--config", (dir / "noseed.cfg").string(), "--seed", "1", "--set", "source.colour=red"}).code, 2);

    const auto model = run_cli({"simulate", "--config", (dir / "noseed.cfg").string(), "--seed", "1", "--set", "source.mu=5"});
    EXPECT_EQ(model.code, 3);
    EXPECT_NE(model.err.find("error[model]"), std::string::npos);

    {
        std::ofstream f(dir / "flat.csv");
        f << "bin_ns,counts\n";
        for (int i = 0; i < 1000; ++i) f << i << ",25\n";
    }
    const auto fit = run_cli({"characterize", "--lifetime", (dir / "flat.csv").string()});
    EXPECT_EQ(fit.code, 4);
    EXPECT_NE(fit.err.find("error[fit]"), std::string::npos);

    EXPECT_EQ(run_cli({"simulate", "--config", (dir / "noseed.cfg").string(), "--seed", "1"}).code, 0);
}
