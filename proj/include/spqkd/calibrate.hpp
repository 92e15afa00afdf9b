#ifndef SPQKD_CALIBRATE_HPP
#define SPQKD_CALIBRATE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <string>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/security.hpp"
#include "spqkd/session.hpp"
#include "spqkd/timetag.hpp"

namespace spqkd {

struct PowerRatePoint {
    double power = 0.0;
    double rate_hz = 0.0;
};

struct SaturationFit {
    SaturationModel model;
    double residual_rms = 0.0;
    int iterations = 0;
};

namespace detail {
inline double saturation_rms(const std::vector<PowerRatePoint>& pts, double r_inf, double p_sat) {
    double ss = 0.0;
    for (const auto& p : pts) {
        const double r = r_inf * p.power / (p.power + p_sat) - p.rate_hz;
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(pts.size()));
}
} // namespace detail

/// Levenberg-Marquardt least squares for R = R_inf P / (P + P_sat).
///
/// Parameters are fitted as logarithms so both stay positive. The start point
/// is R_inf = 2 max(rate), P_sat = median(power).
inline SaturationFit fit_saturation(const std::vector<PowerRatePoint>& points) {
    if (points.size() < 3) throw InvalidParameter("saturation fit needs at least 3 points");
    std::vector<double> powers;
    double max_rate = 0.0;
    for (const auto& p : points) {
        if (!(p.power >= 0.0 && p.rate_hz >= 0.0)) throw InvalidParameter("power and rate must be >= 0");
        powers.push_back(p.power);
        max_rate = std::max(max_rate, p.rate_hz);
    }
    std::sort(powers.begin(), powers.end());
    if (std::adjacent_find(powers.begin(), powers.end()) != powers.end())
        throw InvalidParameter("saturation fit needs distinct powers");
    const std::size_t n = powers.size();
    const double median = n % 2 ? powers[n / 2] : 0.5 * (powers[n / 2 - 1] + powers[n / 2]);
    if (!(max_rate > 0.0 && median > 0.0)) throw FitDiverged("degenerate saturation data");

    double a = std::log(2.0 * max_rate), b = std::log(median);
    const double start = detail::saturation_rms(points, std::exp(a), std::exp(b));
    double cost = start;
    double lambda = 1e-3;
    int it = 0;
    bool converged = false;
    for (; it < 200 && !converged; ++it) {
        const double r_inf = std::exp(a), p_sat = std::exp(b);
        // Normal equations J^T J d = -J^T r for residual r = model - data.
        double jtj00 = 0, jtj01 = 0, jtj11 = 0, g0 = 0, g1 = 0;
        for (const auto& p : points) {
            const double denom = p.power + p_sat;
            const double model = r_inf * p.power / denom;
            const double res = model - p.rate_hz;
            const double da = model;                             // d model / d ln R_inf
            const double db = -r_inf * p.power * p_sat / (denom * denom);  // d model / d ln P_sat
            jtj00 += da * da;
            jtj01 += da * db;
            jtj11 += db * db;
            g0 += da * res;
            g1 += db * res;
        }
        bool improved = false;
        for (int tries = 0; tries < 30 && !improved; ++tries) {
            const double m00 = jtj00 * (1.0 + lambda), m11 = jtj11 * (1.0 + lambda);
            const double det = m00 * m11 - jtj01 * jtj01;
            if (!(std::abs(det) > 0.0)) break;
            const double da = -(m11 * g0 - jtj01 * g1) / det;
            const double db = -(m00 * g1 - jtj01 * g0) / det;
            const double trial = detail::saturation_rms(points, std::exp(a + da), std::exp(b + db));
            if (std::isfinite(trial) && trial < cost) {
                const double gain = cost - trial;
                a += da;
                b += db;
                cost = trial;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                converged = gain <= 1e-14 * cost || std::hypot(da, db) < 1e-13;
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) break;
    }
    if (!(cost < start) && start > 0.0) throw FitDiverged("saturation fit did not reduce the residual");
    return {{std::exp(a), std::exp(b)}, cost, it};
}

inline std::vector<PowerRatePoint> read_power_rate_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty saturation CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "power,rate_hz") throw FormatError("saturation CSV must start with header 'power,rate_hz'");
    std::vector<PowerRatePoint> pts;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("bad saturation CSV row '" + line + "'");
        try {
            pts.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
        } catch (const std::exception&) {
            throw FormatError("bad saturation CSV row '" + line + "'");
        }
    }
    return pts;
}

struct LifetimeFit {
    double lifetime_ns = 0.0;
    double uncertainty_ns = 0.0;
    double background = 0.0;
    std::size_t first_bin = 0;
    std::size_t n_bins = 0;
};

inline constexpr std::size_t kLifetimeBackgroundBins = 20;

/// Weighted log-linear fit of the decay tail after the histogram maximum.
///
/// Background is the mean of the 20 bins that end two bins before the peak.
/// The tail runs from the peak while counts stay 3 sigma above background.
inline LifetimeFit fit_lifetime(const DelayHistogram& h) {
    const std::size_t nb = h.counts.size();
    if (nb < kLifetimeBackgroundBins + 8) throw InsufficientDecay("histogram too short for a lifetime fit");
    const std::size_t peak = h.argmax();
    const auto at = [&](std::ptrdiff_t i) {
        const auto m = static_cast<std::ptrdiff_t>(nb);
        return h.counts[static_cast<std::size_t>(((i % m) + m) % m)];
    };
    double bg = 0.0;
    for (std::size_t k = 0; k < kLifetimeBackgroundBins; ++k)
        bg += at(static_cast<std::ptrdiff_t>(peak) - 2 - static_cast<std::ptrdiff_t>(k));
    bg /= static_cast<double>(kLifetimeBackgroundBins);
    const double threshold = 3.0 * std::sqrt(std::max(bg, 1.0));

    // Weighted least squares of y = ln(c - bg) on bin centres; var(y) ~ c / (c - bg)^2.
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < nb; ++k) {
        const double c = at(static_cast<std::ptrdiff_t>(peak + k));
        const double s = c - bg;
        if (!(s > threshold)) break;
        const double w = s * s / std::max(c, 1.0);
        const double x = (static_cast<double>(k) + 0.5) * h.bin_width_ns;
        const double y = std::log(s);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
        ++used;
    }
    if (used < 5) throw InsufficientDecay("decay tail spans fewer than 5 bins above background");
    const double det = sw * sxx - sx * sx;
    const double slope = (sw * sxy - sx * sy) / det;
    if (!(slope < 0.0)) throw InsufficientDecay("tail does not decay");
    const double slope_sigma = std::sqrt(sw / det);
    return {-1.0 / slope, slope_sigma / (slope * slope), bg, peak, used};
}

/// Optical error rate q that makes the closed-form QBER equal `measured_qber`.
inline double calibrate_q(double measured_qber, const SecurityInputs& in) {
    if (!(in.p_click > 0.0 && in.p_signal > 0.0)) throw Infeasible("calibration needs p_signal > 0");
    const double floor = 0.5 * in.p_dc / in.p_click;
    if (measured_qber < floor)
        throw Infeasible("measured QBER " + std::to_string(measured_qber) + " below dark floor " + std::to_string(floor));
    return (measured_qber * in.p_click - 0.5 * in.p_dc) / in.p_signal;
}

/// Link-level measurements a B92 scenario is tuned to reproduce.
struct B92Targets {
    double signal_rate_per_apd_hz = 400.0;  ///< signal clicks per detector, all delays
    double qber = 0.0895;
    FilterWindow qber_window{148.0, 3.0};
};

namespace detail {
template <typename F>
double bisect_increasing(F&& f, double lo, double hi, double target) {
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Mean per-detector signal click probability over all delays.
inline double signal_click_per_apd(ScenarioConfig cfg) {
    cfg.detectors[0].dark_rate_hz = cfg.detectors[1].dark_rate_hz = 0.0;
    const auto o = click_probability_oracle(cfg, {0.0, cfg.source.period_ns()});
    return 0.5 * (o.p_click_detector[0] + o.p_click_detector[1]);
}
} // namespace detail

/// Solves for the setup transmission and polarization misalignment that make
/// the engine produce the target per-APD signal rate and windowed QBER.
/// Both unknowns interact weakly, so the two 1-D solves are alternated.
inline ScenarioConfig calibrate_b92_scenario(ScenarioConfig cfg, const B92Targets& targets) {
    validate(cfg);
    const double target_click = targets.signal_rate_per_apd_hz / cfg.source.rep_rate_hz;
    for (int round = 0; round < 8; ++round) {
        auto with_t = [&](double t) {
            ScenarioConfig c = cfg;
            c.channel.setup_transmission = t;
            return detail::signal_click_per_apd(c);
        };
        if (with_t(1.0) < target_click) throw Infeasible("signal rate unreachable even at unit transmission");
        cfg.channel.setup_transmission = detail::bisect_increasing(with_t, 0.0, 1.0, target_click);

        auto with_eps = [&](double eps) {
            ScenarioConfig c = cfg;
            c.pol_misalignment_deg = eps;
            return click_probability_oracle(c, targets.qber_window).qber_exact;
        };
        if (with_eps(0.0) > targets.qber) throw Infeasible("dark floor alone exceeds the target QBER");
        if (with_eps(45.0) < targets.qber) throw Infeasible("target QBER unreachable by misalignment");
        cfg.pol_misalignment_deg = detail::bisect_increasing(with_eps, 0.0, 45.0, targets.qber);
    }
    return cfg;
}

} // namespace spqkd

#endif
