// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "reference.hpp"
#include "scenarios.hpp"
#include "spqkd/spqkd.hpp"

using namespace spqkd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

unsigned worker_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1. Closed-form QBER: calibrate q at 3 ns, predict 9 ns.
Outcome qber_cross_prediction() {
    const auto t0 = std::chrono::steady_clock::now();
    auto at3 = rate_budget_inputs(800.0, 1500.0, 3.45, 1e6, 3.0, 0.0);
    const double q = calibrate_q(0.0895, at3);
    at3.q = q;
    const double back = expected_qber(at3);
    const double at9 = expected_qber(rate_budget_inputs(800.0, 1500.0, 3.45, 1e6, 9.0, q));
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = std::abs(back - 0.0895) < 1e-12 && std::abs(at9 - 0.1134) <= 0.025 && ms < 1000.0;
    return {ok, fmt("q=%.6f, QBER(3ns)=%.6f, predicted QBER(9ns)=%.4f vs 0.1134 +/- 0.025, %.2f ms", q, back, at9, ms)};
}

// 2. Simulated 2.5 s session, rate = filtered conclusive clicks / 2.
Outcome measured_rates() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& cfg = fixtures::paper_scenario();
    const auto run = run_qkd_session(cfg);
    const auto rows = filter_scan(run.stream, run.alice, cfg.source, 148.0, {3.0, 9.0});
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double r3 = rows[0].sifted_rate_bps, r9 = rows[1].sifted_rate_bps;
    const bool ok = std::abs(r3 / 238.0 - 1.0) <= 0.2 && std::abs(r9 / 414.0 - 1.0) <= 0.2 && s < 10.0;
    return {ok, fmt("3 ns: %.1f bps (238 +/- 20%%, %+.1f%%), 9 ns: %.1f bps (414 +/- 20%%, %+.1f%%), QBER %.4f / %.4f, %.2f s",
                    r3, 100 * (r3 / 238.0 - 1), r9, 100 * (r9 / 414.0 - 1), rows[0].qber, rows[1].qber, s)};
}

// 3. Monte Carlo frequencies against the enumeration oracle.
Outcome monte_carlo_vs_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_cell;
    int cells = 0, failures = 0;
    std::uint64_t seed = 1000;
    for (double mu : {0.005, 0.0117, 0.05}) {
        for (double loss : {0.0, 10.0, 20.0}) {
            for (double dt : {3.0, 9.0, 30.0}) {
                auto cfg = fixtures::paper_scenario();
                cfg.source.mu = mu;
                cfg.channel.loss_db = loss;
                cfg.duration_s = 1.0;  // 10^6 pulses
                cfg.seed = seed++;
                const FilterWindow w{148.0, dt};
                const auto run = run_qkd_session(cfg, {worker_threads()});
                const auto filtered = apply_window(run.stream, w, cfg.source.rep_rate_hz);
                double a1 = 0, a2 = 0, both = 0, errors = 0;
                for (const auto& pc : pulse_clicks(filtered, cfg.source.rep_rate_hz)) {
                    a1 += pc.apd1;
                    a2 += pc.apd2;
                    both += pc.double_click();
                    if (!pc.double_click() && (pc.apd1 ? 0 : 1) != run.alice[pc.pulse_index].alice_bit) errors += 1;
                }
                const auto o = click_probability_oracle(cfg, w);
                const double n = static_cast<double>(cfg.pulse_count());
                const std::pair<double, double> checks[] = {
                    {a1, o.p_click_detector[0]}, {a2, o.p_click_detector[1]}, {both, o.p_double}, {errors, o.p_error}};
                for (const auto& [count, p] : checks) {
                    const double sigma = std::sqrt(n * p * (1 - p));
                    const double z = sigma > 0 ? std::abs(count - n * p) / sigma : (count == 0 ? 0.0 : INFINITY);
                    if (z > 3.0) ++failures;
                    if (z > worst) {
                        worst = z;
                        worst_cell = fmt("mu=%g loss=%g dt=%g", mu, loss, dt);
                    }
                }
                ++cells;
            }
        }
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {failures == 0 && s < 60.0,
            fmt("%d cells x 4 frequencies, %d beyond 3 sigma, max |z|=%.2f (%s), %.1f s", cells, failures, worst,
                worst_cell.c_str(), s)};
}

// 4. g2(0) from HBT runs.
Outcome g2_recovery() {
    auto cfg = fixtures::ideal_scenario(0.3, 1.0, 7);
    cfg.source.g2_zero = 0.12;
    cfg.detectors = {{{0.7, 0.0}, {0.7, 0.0}}};
    const auto est = estimate_g2(run_hbt_session(cfg, {worker_threads()}), cfg.source.rep_rate_hz);
    double side_total = 0.0;
    for (double c : est.side_counts) side_total += c;

    auto ideal = cfg;
    ideal.source.g2_zero = 0.0;
    ideal.seed = 8;
    const auto est0 = estimate_g2(run_hbt_session(ideal, {worker_threads()}), ideal.source.rep_rate_hz);
    const bool ok = std::abs(est.value - 0.12) <= 0.03 && est.side_mean >= 1e4 && est0.value < 0.01;
    return {ok, fmt("g2=%.4f +/- %.4f (target 0.12 +/- 0.03, mean side peak %.0f, %.0f side coincidences), ideal source g2=%.4f",
                    est.value, est.uncertainty, est.side_mean, side_total, est0.value)};
}

// 5. Lifetime and saturation fits on synthetic data.
Outcome characterization_fits() {
    Rng rng(2024);
    DelayHistogram h;
    h.counts.assign(1000, 0.0);
    std::size_t events = 0;
    for (; events < 100000; ++events) {
        const double t = 148.0 + rng.exponential(3.45);
        if (t < 1000.0) h.counts[static_cast<std::size_t>(t)] += 1.0;
    }
    for (int i = 0; i < 10000; ++i) h.counts[static_cast<std::size_t>(1000.0 * rng.uniform())] += 1.0;
    const auto life = fit_lifetime(h);

    std::vector<double> r_inf, p_sat;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng noise(seed);
        std::vector<PowerRatePoint> pts;
        for (int i = 0; i < 12; ++i) {
            const double p = 1.7 * std::pow(10.0, -1.0 + 2.0 * i / 11.0);
            pts.push_back({p, saturation_rate(p, {495e3, 1.7}) * (1.0 + 0.05 * noise.normal())});
        }
        const auto fit = fit_saturation(pts);
        r_inf.push_back(fit.model.r_inf_hz);
        p_sat.push_back(fit.model.p_sat);
    }
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double mr = median(r_inf), mp = median(p_sat);
    const bool ok = std::abs(life.lifetime_ns - 3.45) <= 0.05 && std::abs(mr / 495e3 - 1) <= 0.05 &&
                    std::abs(mp / 1.7 - 1) <= 0.05;
    return {ok, fmt("lifetime %.4f +/- %.4f ns from %zu events (3.45 +/- 0.05); median R_inf %.1f kHz (%+.2f%%), "
                    "median P_sat %.4f (%+.2f%%) over 100 seeds",
                    life.lifetime_ns, life.uncertainty_ns, events, mr / 1e3, 100 * (mr / 495e3 - 1), mp,
                    100 * (mp / 1.7 - 1))};
}

// 6. Secret key rate versus loss for the two configured setups.
Outcome key_rate_curves() {
    const auto solid_cfg = Config::load(std::string(SPQKD_CONFIG_DIR) + "/fig5_solid.cfg");
    const auto dashed_cfg = Config::load(std::string(SPQKD_CONFIG_DIR) + "/fig5_dashed.cfg");
    const auto solid = read_curves(solid_cfg), dashed = read_curves(dashed_cfg);
    const auto grid = loss_grid(solid_cfg.get_double("sweep", "loss_db_start"),
                                solid_cfg.get_double("sweep", "loss_db_stop"),
                                solid_cfg.get_double("sweep", "loss_db_step"));
    bool ok = solid.size() == dashed.size() && !solid.empty();
    std::string detail;
    for (std::size_t c = 0; ok && c < solid.size(); ++c) {
        if (solid[c].name != dashed[c].name) {
            ok = false;
            break;
        }
        const auto a = sweep_loss(solid[c].model, grid), b = sweep_loss(dashed[c].model, grid);
        const double cut_a = cutoff_loss(a), cut_b = cutoff_loss(b);
        bool decreasing = true, dominated = true;
        for (std::size_t i = 1; i < a.size() && a[i - 1].loss_db < cut_a; ++i)
            decreasing &= a[i].report.skr_per_pulse < a[i - 1].report.skr_per_pulse;
        for (std::size_t i = 1; i < b.size() && b[i - 1].loss_db < cut_b; ++i)
            decreasing &= b[i].report.skr_per_pulse < b[i - 1].report.skr_per_pulse;
        for (std::size_t i = 0; i < a.size(); ++i) dominated &= b[i].report.skr_per_pulse >= a[i].report.skr_per_pulse;
        const bool finite = std::isfinite(cut_a) && std::isfinite(cut_b) && cut_a > 0 && cut_b > 0;
        ok = decreasing && dominated && finite && cut_b > cut_a;
        detail += fmt("%s%s: solid %.1f bps at 0 dB, cutoff %.2f dB; dashed %.1f bps, cutoff %.2f dB",
                      detail.empty() ? "" : "; ", solid[c].name.c_str(), a.front().report.skr_bps, cut_a,
                      b.front().report.skr_bps, cut_b);
        if (!decreasing) detail += " [not decreasing]";
        if (!dominated) detail += " [dashed below solid]";
    }
    return {ok, detail};
}

// 7. Math spot checks against the independent series evaluation.
Outcome math_spot_checks() {
    struct Check {
        const char* name;
        double value, expected, tol, reference;
    };
    const Check checks[] = {
        {"h(0.5)", binary_entropy(0.5), 1.0, 1e-12, static_cast<double>(ref::entropy(0.5L))},
        {"h(0.0895)", binary_entropy(0.0895), 0.4349, 1e-4, static_cast<double>(ref::entropy(0.0895L))},
        {"tau(0)", compression_tau(0.0), 1.0, 1e-12, static_cast<double>(ref::tau(0.0L))},
        {"tau(0.25)", compression_tau(0.25), 0.1926, 1e-4, static_cast<double>(ref::tau(0.25L))},
        {"beta", beta_factor(4.74e-4, 3.148e-6), 0.99336, 1e-5, static_cast<double>(ref::beta(4.74e-4L, 3.148e-6L))},
    };
    bool ok = true;
    std::string detail;
    for (const auto& c : checks) {
        const bool lib_vs_ref = std::abs(c.value - c.reference) < 1e-12;
        const bool ref_vs_target = std::abs(c.reference - c.expected) <= c.tol;
        ok &= lib_vs_ref && ref_vs_target;
        detail += fmt("%s%s=%.6f (reference %.6f, target %g +/- %g)%s", detail.empty() ? "" : ", ", c.name, c.value,
                      c.reference, c.expected, c.tol, ref_vs_target ? "" : fmt(" [MISS by %.2e; library and reference agree]", std::abs(c.reference - c.expected) - c.tol).c_str());
    }
    return {ok, detail};
}

// 8. Protocol invariants.
Outcome protocol_invariants() {
    const auto cfg = fixtures::ideal_scenario(1.0, 1.0, 99);
    const auto run = run_qkd_session(cfg, {worker_threads()});
    const auto key = b92_sift(run.alice, run.stream, cfg.source.rep_rate_hz);
    const double n = static_cast<double>(cfg.pulse_count());
    const double frac = static_cast<double>(key.size()) / n;
    const double z = std::abs(frac - 0.25) / std::sqrt(0.25 * 0.75 / n);
    const double qber = measure_qber(key).qber;

    double worst = 0.0;
    for (double sig : {1e-5, 4.65e-4, 3e-2})
        for (double dc : {0.0, 1e-6, 9e-6, 1e-4})
            for (double q = 0.0; q <= 0.5; q += 0.03125) {
                SecurityInputs in;
                in.p_signal = sig;
                in.p_dc = dc;
                in.p_click = sig + dc;
                in.q = q;
                worst = std::max(worst, std::abs(calibrate_q(expected_qber(in), in) - q));
            }

    auto replay_cfg = fixtures::paper_scenario();
    const auto bytes = [&] {
        std::ostringstream os(std::ios::binary);
        write_binary(os, run_qkd_session(replay_cfg, {worker_threads()}).stream);
        return os.str();
    };
    const std::string first = bytes(), second = bytes();
    const bool replay = first == second;

    const bool ok = z <= 3.0 && qber == 0.0 && worst <= 1e-12 && replay;
    return {ok, fmt("conclusive fraction %.5f (|z|=%.2f), QBER %.3g, q round-trip max error %.2e, replay %s (%zu bytes)",
                    frac, z, qber, worst, replay ? "byte-identical" : "DIFFERS", first.size())};
}

} // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"closed-form QBER calibration and 9 ns prediction", qber_cross_prediction},
        {"measured key rates at 3 ns and 9 ns", measured_rates},
        {"Monte Carlo frequencies agree with the oracle", monte_carlo_vs_oracle},
        {"g2(0) recovery", g2_recovery},
        {"characterization fits", characterization_fits},
        {"key-rate-versus-loss properties", key_rate_curves},
        {"math spot checks against independent evaluation", math_spot_checks},
        {"protocol invariants", protocol_invariants},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", index, name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d/%d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
