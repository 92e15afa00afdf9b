#ifndef SPQKD_PHOTONICS_HPP
#define SPQKD_PHOTONICS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/rng.hpp"

namespace spqkd {

/// Photon statistics and timing of the emitter.
struct SourceParams {
    double mu = 0.0;             ///< mean photon number per pulse at Alice's input
    double g2_zero = 0.0;        ///< second-order correlation at zero delay
    double lifetime_ns = 1.0;    ///< exponential emission decay constant
    double rep_rate_hz = 1e6;    ///< excitation repetition rate
    double sync_delay_ns = 0.0;  ///< trigger-to-emission electronic delay

    [[nodiscard]] double period_ns() const { return 1e9 / rep_rate_hz; }
};

inline void validate(const SourceParams& s) {
    if (!(s.mu >= 0.0)) throw InvalidParameter("mu must be >= 0");
    if (!(s.g2_zero >= 0.0)) throw InvalidParameter("g2_zero must be >= 0");
    if (!(s.lifetime_ns > 0.0)) throw InvalidParameter("lifetime_ns must be > 0");
    if (!(s.rep_rate_hz > 0.0)) throw InvalidParameter("rep_rate_hz must be > 0");
    if (!(s.sync_delay_ns >= 0.0)) throw InvalidParameter("sync_delay_ns must be >= 0");
    if (s.g2_zero * s.mu * s.mu / 2.0 > s.mu)
        throw InvalidStatistics("two-photon weight g2*mu^2/2 exceeds mu");
}

/// Photon-number distribution truncated at two photons.
struct PhotonNumberDist {
    double p0 = 1.0;
    double p1 = 0.0;
    double p2 = 0.0;

    [[nodiscard]] double mean() const { return p1 + 2.0 * p2; }
    [[nodiscard]] double operator[](int n) const { return n == 0 ? p0 : n == 1 ? p1 : n == 2 ? p2 : 0.0; }
};

/// Multi-photon emission probability P_m = mu^2 g2(0) / 2.
inline double multiphoton_prob(const SourceParams& source) {
    return 0.5 * source.mu * source.mu * source.g2_zero;
}

/// Minimal distribution reproducing both the mean and g2(0).
inline PhotonNumberDist photon_number_dist(const SourceParams& source) {
    validate(source);
    PhotonNumberDist d;
    d.p2 = multiphoton_prob(source);
    d.p1 = source.mu - 2.0 * d.p2;
    d.p0 = 1.0 - d.p1 - d.p2;
    const auto bad = [](double p) { return !(p >= 0.0 && p <= 1.0); };
    if (bad(d.p0) || bad(d.p1) || bad(d.p2))
        throw InvalidStatistics("mu=" + std::to_string(source.mu) + ", g2=" + std::to_string(source.g2_zero) +
                                " has no three-point photon-number distribution");
    return d;
}

inline int sample_photon_number(const PhotonNumberDist& d, Rng& rng) {
    const double u = rng.uniform();
    if (u < d.p1) return 1;
    if (u < d.p1 + d.p2) return 2;
    return 0;
}

/// Linear polarization angle in degrees, reduced to [0, 180).
class PolAngle {
public:
    constexpr PolAngle() = default;
    explicit PolAngle(double degrees) : degrees_(reduce(degrees)) {}

    [[nodiscard]] double degrees() const noexcept { return degrees_; }

    static PolAngle horizontal() { return PolAngle(0.0); }
    static PolAngle vertical() { return PolAngle(90.0); }
    static PolAngle diagonal() { return PolAngle(45.0); }
    static PolAngle antidiagonal() { return PolAngle(135.0); }

    friend bool operator==(const PolAngle&, const PolAngle&) = default;

private:
    static double reduce(double deg) {
        double r = std::fmod(deg, 180.0);
        if (r < 0.0) r += 180.0;
        if (r >= 180.0) r = 0.0;
        return r;
    }

    double degrees_ = 0.0;
};

/// Malus projection probability cos^2(photon - analyzer).
inline double malus_prob(PolAngle photon, PolAngle analyzer) {
    const double rad = (photon.degrees() - analyzer.degrees()) * std::numbers::pi / 180.0;
    const double c = std::cos(rad);
    return std::clamp(c * c, 0.0, 1.0);
}

struct DetectorParams {
    double efficiency = 1.0;
    double dark_rate_hz = 0.0;
};

inline void validate(const DetectorParams& d) {
    if (!(d.efficiency >= 0.0 && d.efficiency <= 1.0)) throw InvalidParameter("detector efficiency must be in [0,1]");
    if (!(d.dark_rate_hz >= 0.0)) throw InvalidParameter("dark_rate_hz must be >= 0");
}

struct ChannelParams {
    double loss_db = 0.0;
    double setup_transmission = 1.0;

    [[nodiscard]] double transmission() const { return setup_transmission * std::pow(10.0, -loss_db / 10.0); }
};

inline void validate(const ChannelParams& c) {
    if (!(c.loss_db >= 0.0)) throw InvalidParameter("loss_db must be >= 0");
    if (!(c.setup_transmission >= 0.0 && c.setup_transmission <= 1.0))
        throw InvalidParameter("setup_transmission must be in [0,1]");
}

/// Probability that a photon has been emitted within t_ns of excitation.
inline double emission_delay_cdf(double t_ns, double lifetime_ns) {
    if (t_ns <= 0.0) return 0.0;
    return -std::expm1(-t_ns / lifetime_ns);
}

inline double sample_emission_delay(double lifetime_ns, Rng& rng) { return rng.exponential(lifetime_ns); }

struct SaturationModel {
    double r_inf_hz = 1.0;
    double p_sat = 1.0;
};

/// Count rate R = R_inf P / (P + P_sat) of a saturable emitter.
inline double saturation_rate(double power, const SaturationModel& model) {
    return model.r_inf_hz * power / (power + model.p_sat);
}

struct EfficiencyStage {
    std::string name;
    double transmission = 1.0;
};

struct EfficiencyBudgetRow {
    std::string name;
    double transmission;
    double cumulative;
};

struct EfficiencyBudget {
    std::vector<EfficiencyBudgetRow> rows;
    double overall = 1.0;
};

/// Chains stage transmissions; the overall figure is their product.
inline EfficiencyBudget efficiency_budget(const std::vector<EfficiencyStage>& stages) {
    EfficiencyBudget budget;
    for (const auto& s : stages) {
        if (!(s.transmission >= 0.0 && s.transmission <= 1.0))
            throw InvalidParameter("stage '" + s.name + "' transmission outside [0,1]");
        budget.overall *= s.transmission;
        budget.rows.push_back({s.name, s.transmission, budget.overall});
    }
    return budget;
}

// Detected-rate chain of the B92 demonstration: 30 kHz after the objective,
// ~7.8 kHz at Alice's input, 400 Hz of signal on each of two APDs.
inline std::vector<EfficiencyStage> demo_efficiency_chain() {
    return {
        {"objective to Alice input (PM fiber, spectral filter)", 7.8e3 / 30e3},
        {"Alice input to APDs (EOM, optics, couplings, detection, protocol)", 800.0 / 7.8e3},
    };
}

} // namespace spqkd

#endif
