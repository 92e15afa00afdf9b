#ifndef SPQKD_SECURITY_HPP
#define SPQKD_SECURITY_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/protocol.hpp"
#include "spqkd/session.hpp"

namespace spqkd {

/// Per-pulse quantities feeding the expected-QBER and key-rate formulas.
///
/// Conventions: p_dc is the summed dark-click probability of both detectors
/// inside the window (2 * r_d * dt for identical detectors) and
/// p_click = p_signal + p_dc.
struct SecurityInputs {
    double p_click = 0.0;
    double p_signal = 0.0;
    double p_dc = 0.0;
    double q = 0.0;
    double mu = 0.0;
    double g2_zero = 0.0;
    double rep_rate_hz = 1e6;
    double delta_t_ns = 0.0;
};

struct KeyRateReport {
    double qber_expected = 0.0;
    double beta = 0.0;
    double p_m = 0.0;
    double tau_value = 0.0;
    double f_value = 0.0;
    double h_value = 0.0;
    double skr_per_pulse = 0.0;
    double skr_bps = 0.0;
    bool secure = false;
    bool f_extrapolated = false;  ///< QBER beyond the f table; f held at its last anchor
};

inline double binary_entropy(double e) {
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("binary_entropy argument outside [0,1]");
    if (e == 0.0 || e == 1.0) return 0.0;
    return -e * std::log2(e) - (1.0 - e) * std::log2(1.0 - e);
}

/// Privacy-amplification retained fraction tau(e) = 1 - log2(1 + 4e - 4e^2).
inline double compression_tau(double e) {
    if (!(e >= 0.0 && e <= 0.5)) throw DomainError("compression_tau argument outside [0,1/2]");
    return 1.0 - std::log2(1.0 + 4.0 * e - 4.0 * e * e);
}

// Error-correction inefficiency anchors (QBER, f).
inline constexpr std::array<std::array<double, 2>, 4> kEcTable{{{0.01, 1.16}, {0.05, 1.16}, {0.10, 1.22}, {0.15, 1.35}}};

inline double ec_factor(double e) {
    if (!(e >= 0.0)) throw DomainError("ec_factor argument must be >= 0");
    if (e > kEcTable.back()[0]) throw OutOfTable("QBER " + std::to_string(e) + " beyond error-correction table");
    if (e <= kEcTable.front()[0]) return kEcTable.front()[1];
    for (std::size_t i = 1; i < kEcTable.size(); ++i) {
        if (e <= kEcTable[i][0]) {
            const auto& [x0, y0] = kEcTable[i - 1];
            const auto& [x1, y1] = kEcTable[i];
            return y0 + (y1 - y0) * (e - x0) / (x1 - x0);
        }
    }
    return kEcTable.back()[1];
}

inline double beta_factor(double p_click, double p_m) {
    if (!(p_click > 0.0 && p_click <= 1.0)) throw DomainError("p_click must be in (0,1]");
    if (!(p_m >= 0.0)) throw DomainError("p_m must be >= 0");
    if (p_m > p_click) throw SecurityViolation("multi-photon probability exceeds click probability");
    return (p_click - p_m) / p_click;
}

inline double expected_qber(const SecurityInputs& in) {
    if (!(in.p_click > 0.0)) throw DomainError("p_click must be > 0");
    const double e = in.q * in.p_signal / in.p_click + 0.5 * in.p_dc / in.p_click;
    if (!(e >= 0.0 && e <= 1.0)) throw DomainError("expected QBER outside [0,1]");
    return e;
}

namespace detail {
// beta * tau(e / beta) - f(e) h(e), filling the report's intermediate terms.
inline double secure_fraction(double e, double beta, KeyRateReport& r) {
    r.h_value = binary_entropy(std::min(e, 1.0));
    if (e <= kEcTable.back()[0]) {
        r.f_value = ec_factor(e);
    } else {
        r.f_value = kEcTable.back()[1];
        r.f_extrapolated = true;
    }
    const double attributed = beta > 0.0 ? e / beta : 0.5;
    r.tau_value = attributed < 0.5 ? compression_tau(attributed) : 0.0;
    return beta * r.tau_value - r.f_value * r.h_value;
}
} // namespace detail

/// Secret key rate per pulse, R = (p_click / 2) (beta tau(e/beta) - f(e) h(e)).
/// Negative rates are returned as computed with `secure == false`.
inline KeyRateReport skr_per_pulse(const SecurityInputs& in) {
    KeyRateReport r;
    r.qber_expected = expected_qber(in);
    r.p_m = 0.5 * in.mu * in.mu * in.g2_zero;
    r.beta = r.p_m >= in.p_click ? 0.0 : beta_factor(in.p_click, r.p_m);
    const double fraction = detail::secure_fraction(r.qber_expected, r.beta, r);
    r.skr_per_pulse = 0.5 * in.p_click * fraction;
    r.skr_bps = r.skr_per_pulse * in.rep_rate_hz;
    r.secure = r.skr_per_pulse > 0.0;
    return r;
}

/// Key rate from a measured click probability and QBER rather than modelled inputs.
inline KeyRateReport skr_from_measurement(double p_click, double qber, double mu, double g2_zero,
                                          double rep_rate_hz) {
    KeyRateReport r;
    r.qber_expected = qber;
    r.p_m = 0.5 * mu * mu * g2_zero;
    if (!(p_click > 0.0)) return r;
    r.beta = r.p_m >= p_click ? 0.0 : beta_factor(p_click, r.p_m);
    r.skr_per_pulse = 0.5 * p_click * detail::secure_fraction(qber, r.beta, r);
    r.skr_bps = r.skr_per_pulse * rep_rate_hz;
    r.secure = r.skr_per_pulse > 0.0;
    return r;
}

/// Fraction of emissions landing in [offset, offset + width) after the sync
/// delay, for exponential emission optionally convolved with Gaussian jitter.
inline double window_signal_fraction(double offset_ns, double width_ns, double lifetime_ns, double jitter_ns = 0.0) {
    if (jitter_ns <= 0.0)
        return emission_delay_cdf(offset_ns + width_ns, lifetime_ns) - emission_delay_cdf(offset_ns, lifetime_ns);
    // Exponentially modified Gaussian CDF.
    const auto cdf = [&](double x) {
        const double s = jitter_ns, tau = lifetime_ns;
        const auto phi = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
        return phi(x / s) - std::exp(-x / tau + 0.5 * s * s / (tau * tau)) * phi(x / s - s / tau);
    };
    return cdf(offset_ns + width_ns) - cdf(offset_ns);
}

/// Parameters of one SKR-vs-loss curve.
struct LinkModel {
    double mu = 0.0;
    double g2_zero = 0.0;
    double setup_transmission = 1.0;
    double detector_efficiency = 1.0;
    double dark_rate_hz = 0.0;  ///< per detector; two detectors assumed
    double lifetime_ns = 1.0;
    double delta_t_ns = 1.0;
    double q = 0.0;
    double rep_rate_hz = 1e6;
};

inline SecurityInputs link_inputs(const LinkModel& m, double loss_db) {
    SecurityInputs in;
    const double t = m.setup_transmission * std::pow(10.0, -loss_db / 10.0);
    in.p_signal = m.mu * t * m.detector_efficiency * emission_delay_cdf(m.delta_t_ns, m.lifetime_ns);
    in.p_dc = 2.0 * m.dark_rate_hz * m.delta_t_ns * 1e-9;
    in.p_click = in.p_signal + in.p_dc;
    in.q = m.q;
    in.mu = m.mu;
    in.g2_zero = m.g2_zero;
    in.rep_rate_hz = m.rep_rate_hz;
    in.delta_t_ns = m.delta_t_ns;
    return in;
}

/// Inputs for a link characterised by its measured signal click rate
/// (summed over both detectors, all delays) and per-detector dark rate.
inline SecurityInputs rate_budget_inputs(double signal_rate_hz, double dark_rate_per_detector_hz, double lifetime_ns,
                                         double rep_rate_hz, double delta_t_ns, double q) {
    SecurityInputs in;
    in.p_signal = signal_rate_hz / rep_rate_hz * emission_delay_cdf(delta_t_ns, lifetime_ns);
    in.p_dc = 2.0 * dark_rate_per_detector_hz * delta_t_ns * 1e-9;
    in.p_click = in.p_signal + in.p_dc;
    in.q = q;
    in.rep_rate_hz = rep_rate_hz;
    in.delta_t_ns = delta_t_ns;
    return in;
}

struct SweepRow {
    double loss_db = 0.0;
    KeyRateReport report;
};

inline std::vector<SweepRow> sweep_loss(const LinkModel& model, std::span<const double> loss_db) {
    for (std::size_t i = 1; i < loss_db.size(); ++i)
        if (!(loss_db[i] > loss_db[i - 1])) throw InvalidParameter("loss range must be strictly ascending");
    std::vector<SweepRow> rows;
    rows.reserve(loss_db.size());
    for (double l : loss_db) rows.push_back({l, skr_per_pulse(link_inputs(model, l))});
    return rows;
}

inline std::vector<double> loss_grid(double start_db, double stop_db, double step_db) {
    if (!(step_db > 0.0) || stop_db < start_db) throw InvalidParameter("bad loss grid");
    std::vector<double> out;
    const auto n = static_cast<std::size_t>(std::floor((stop_db - start_db) / step_db + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(start_db + step_db * static_cast<double>(i));
    return out;
}

/// First loss at which the rate is no longer positive, linearly interpolated
/// between grid points. Returns NaN when the whole sweep is secure.
inline double cutoff_loss(const std::vector<SweepRow>& rows) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].report.skr_per_pulse > 0.0) continue;
        if (i == 0) return rows[0].loss_db;
        const double r0 = rows[i - 1].report.skr_per_pulse, r1 = rows[i].report.skr_per_pulse;
        return rows[i - 1].loss_db + (rows[i].loss_db - rows[i - 1].loss_db) * r0 / (r0 - r1);
    }
    return std::nan("");
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "loss_db,qber,skr_per_pulse,skr_bps,secure_flag\n";
    char buf[160];
    for (const auto& r : rows) {
        const auto& k = r.report;
        std::snprintf(buf, sizeof buf, "%.6g,%.8g,%.8g,%.8g,%d\n", r.loss_db, k.qber_expected,
                      k.secure ? k.skr_per_pulse : 0.0, k.secure ? k.skr_bps : 0.0, k.secure ? 1 : 0);
        os << buf;
    }
}

// ---------------------------------------------------------------------------
// Exact per-pulse enumeration, used as the oracle for the Monte Carlo engine.

struct ClickOracle {
    std::array<double, 2> p_click_detector{};  ///< P(detector fires in window), darks included
    double p_double = 0.0;                     ///< P(both fire)
    double p_sifted = 0.0;                     ///< P(exactly one fires)
    double p_error = 0.0;                      ///< P(exactly one fires and disagrees with Alice)
    double p_signal = 0.0;                     ///< P(sifted click caused by a signal photon)
    double p_dc = 0.0;                         ///< first-order dark probability, sum of r_d * dt
    double p_dc_exact = 0.0;                   ///< 1 - prod exp(-r_d * dt)
    double q = 0.0;                            ///< error fraction of signal-caused sifted clicks
    double expected_qber = 0.0;                ///< closed-form QBER from (q, p_signal, p_dc)
    double qber_exact = 0.0;                   ///< p_error / p_sifted
    double signal_window_fraction = 0.0;
};

/// Sums over photon number n in {0,1,2}, every photon's fate (lost, caught in
/// the window by APD1 or APD2), and each detector's dark outcome.
inline ClickOracle click_probability_oracle(const ScenarioConfig& cfg, const FilterWindow& window) {
    validate(cfg);
    validate(window, cfg.source.period_ns());
    const PhotonNumberDist dist = photon_number_dist(cfg.source);
    const double frac = window_signal_fraction(window.t0_ns - cfg.source.sync_delay_ns, window.delta_t_ns,
                                               cfg.source.lifetime_ns, cfg.timing_jitter_ns);
    const double t = cfg.channel.transmission();
    const std::array<PolAngle, 2> analyzer{apd1_analyzer(cfg.pol_misalignment_deg),
                                           apd2_analyzer(cfg.pol_misalignment_deg)};
    std::array<double, 2> dark{};
    double dark_first_order = 0.0, dark_none = 1.0;
    for (std::size_t d = 0; d < 2; ++d) {
        const double m = cfg.detectors[d].dark_rate_hz * window.delta_t_ns * 1e-9;
        dark[d] = -std::expm1(-m);
        dark_first_order += m;
        dark_none *= 1.0 - dark[d];
    }

    ClickOracle o;
    o.signal_window_fraction = frac;
    double p_signal_error = 0.0;
    const double weight = 1.0 / static_cast<double>(cfg.pattern.size());
    for (int bit : cfg.pattern) {
        const PolAngle state = b92_state(bit);
        std::array<double, 2> a{};
        for (std::size_t d = 0; d < 2; ++d)
            a[d] = t * 0.5 * malus_prob(state, analyzer[d]) * cfg.detectors[d].efficiency * frac;

        // sig[s1][s2]: probability that signal photons put a click in the
        // window on APD1 (s1) and APD2 (s2).
        double sig[2][2] = {{0, 0}, {0, 0}};
        const std::array<double, 3> fate{1.0 - a[0] - a[1], a[0], a[1]};  // none, APD1, APD2
        sig[0][0] += dist.p0;
        for (int f = 0; f < 3; ++f) sig[f == 1][f == 2] += dist.p1 * fate[static_cast<std::size_t>(f)];
        for (int f1 = 0; f1 < 3; ++f1)
            for (int f2 = 0; f2 < 3; ++f2)
                sig[f1 == 1 || f2 == 1][f1 == 2 || f2 == 2] +=
                    dist.p2 * fate[static_cast<std::size_t>(f1)] * fate[static_cast<std::size_t>(f2)];

        for (int s1 = 0; s1 < 2; ++s1)
            for (int s2 = 0; s2 < 2; ++s2)
                for (int k1 = 0; k1 < 2; ++k1)
                    for (int k2 = 0; k2 < 2; ++k2) {
                        const double p = weight * sig[s1][s2] * (k1 ? dark[0] : 1.0 - dark[0]) *
                                         (k2 ? dark[1] : 1.0 - dark[1]);
                        const bool fire1 = s1 || k1, fire2 = s2 || k2;
                        if (fire1) o.p_click_detector[0] += p;
                        if (fire2) o.p_click_detector[1] += p;
                        if (fire1 && fire2) o.p_double += p;
                        if (fire1 == fire2) continue;
                        o.p_sifted += p;
                        const int bob = fire1 ? 0 : 1;
                        const bool wrong = bob != bit;
                        if (wrong) o.p_error += p;
                        if (fire1 ? s1 : s2) {
                            o.p_signal += p;
                            if (wrong) p_signal_error += p;
                        }
                    }
    }
    o.p_dc = dark_first_order;
    o.p_dc_exact = 1.0 - dark_none;
    o.q = o.p_signal > 0.0 ? p_signal_error / o.p_signal : 0.0;
    const double p_click = o.p_signal + o.p_dc;
    o.expected_qber = p_click > 0.0 ? (o.q * o.p_signal + 0.5 * o.p_dc) / p_click : 0.0;
    o.qber_exact = o.p_sifted > 0.0 ? o.p_error / o.p_sifted : 0.0;
    return o;
}

/// Security inputs matching an oracle evaluation.
inline SecurityInputs oracle_inputs(const ClickOracle& o, const ScenarioConfig& cfg, const FilterWindow& w) {
    SecurityInputs in;
    in.p_signal = o.p_signal;
    in.p_dc = o.p_dc;
    in.p_click = o.p_signal + o.p_dc;
    in.q = o.q;
    in.mu = cfg.source.mu;
    in.g2_zero = cfg.source.g2_zero;
    in.rep_rate_hz = cfg.source.rep_rate_hz;
    in.delta_t_ns = w.delta_t_ns;
    return in;
}

} // namespace spqkd

#endif
