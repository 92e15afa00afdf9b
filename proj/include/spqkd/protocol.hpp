#ifndef SPQKD_PROTOCOL_HPP
#define SPQKD_PROTOCOL_HPP

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/time_tags.hpp"

namespace spqkd {

/// What Alice sent on one pulse.
struct PulseRecord {
    std::uint64_t pulse_index = 0;
    int alice_bit = 0;
    PolAngle encoded_angle;
};

// B92 state alphabet: bit 0 is V, bit 1 is +45.
inline PolAngle b92_state(int bit) { return bit == 0 ? PolAngle::vertical() : PolAngle::diagonal(); }

// Bob's analyzers. APD1 passes -45 (orthogonal to +45, so a click means 0);
// APD2 passes H (orthogonal to V, so a click means 1). A misalignment of eps
// turns each analyzer toward the state it should extinguish, so each arm
// leaks sin^2(eps) of the wrong state and both arms stay balanced.
inline PolAngle apd1_analyzer(double misalignment_deg) { return PolAngle(135.0 - misalignment_deg); }
inline PolAngle apd2_analyzer(double misalignment_deg) { return PolAngle(0.0 + misalignment_deg); }

inline std::vector<PulseRecord> encode_pattern(const std::vector<int>& pattern, std::uint64_t length) {
    if (pattern.empty()) throw InvalidParameter("encoding pattern must be non-empty");
    for (int b : pattern)
        if (b != 0 && b != 1) throw InvalidParameter("pattern bits must be 0 or 1");
    std::vector<PulseRecord> out;
    out.reserve(static_cast<std::size_t>(length));
    for (std::uint64_t k = 0; k < length; ++k) {
        const int bit = pattern[static_cast<std::size_t>(k % pattern.size())];
        out.push_back({k, bit, b92_state(bit)});
    }
    return out;
}

/// Which detectors fired during one pulse period.
struct PulseClicks {
    std::uint64_t pulse_index = 0;
    bool apd1 = false;
    bool apd2 = false;

    [[nodiscard]] bool double_click() const { return apd1 && apd2; }
};

// Assigns every detection to the latest trigger at or before it. The pulse
// index is the trigger timestamp in units of the repetition period, so
// excerpts that do not start at pulse 0 keep their absolute indices.
// Repeated clicks of one detector within a pulse collapse to one.
inline std::vector<PulseClicks> pulse_clicks(const TimeTagStream& stream, double rep_rate_hz) {
    if (!(rep_rate_hz > 0.0)) throw InvalidParameter("rep_rate_hz must be > 0");
    const double period = static_cast<double>(period_ps(rep_rate_hz));
    std::vector<PulseClicks> out;
    bool have_trigger = false;
    std::uint64_t current = 0;
    for (const auto& e : stream.events) {
        if (e.channel == Channel::Trigger) {
            have_trigger = true;
            current = static_cast<std::uint64_t>(std::llround(static_cast<double>(e.t_ps) / period));
            continue;
        }
        if (!have_trigger)
            throw UnmatchedEvent("detection at t=" + std::to_string(e.t_ps) + " ps precedes the first trigger");
        if (out.empty() || out.back().pulse_index != current) out.push_back({current, false, false});
        (e.channel == Channel::Apd1 ? out.back().apd1 : out.back().apd2) = true;
    }
    return out;
}

struct SiftedEntry {
    std::uint64_t pulse_index = 0;
    int alice_bit = 0;
    int bob_bit = 0;

    friend bool operator==(const SiftedEntry&, const SiftedEntry&) = default;
};

/// Position-aligned Alice/Bob bits after sifting.
struct SiftedKey {
    std::vector<SiftedEntry> entries;
    std::uint64_t discarded_double_clicks = 0;

    [[nodiscard]] std::size_t size() const { return entries.size(); }
};

/// B92 sifting: a lone APD1 click is bit 0, a lone APD2 click is bit 1, and
/// pulses where both detectors fired are discarded.
inline SiftedKey b92_sift(const std::vector<PulseRecord>& alice, const TimeTagStream& filtered, double rep_rate_hz) {
    SiftedKey key;
    for (const auto& pc : pulse_clicks(filtered, rep_rate_hz)) {
        if (pc.double_click()) {
            ++key.discarded_double_clicks;
            continue;
        }
        if (pc.pulse_index >= alice.size() || alice[static_cast<std::size_t>(pc.pulse_index)].pulse_index != pc.pulse_index)
            throw InvalidParameter("no pulse record for pulse " + std::to_string(pc.pulse_index));
        const auto& rec = alice[static_cast<std::size_t>(pc.pulse_index)];
        key.entries.push_back({pc.pulse_index, rec.alice_bit, pc.apd1 ? 0 : 1});
    }
    return key;
}

struct QberMeasurement {
    double qber = 0.0;
    std::uint64_t n_sifted = 0;
    std::uint64_t n_errors = 0;
};

inline QberMeasurement measure_qber(const SiftedKey& key) {
    if (key.entries.empty()) throw EmptyKey("cannot measure QBER of an empty sifted key");
    QberMeasurement m;
    m.n_sifted = key.entries.size();
    for (const auto& e : key.entries) m.n_errors += (e.alice_bit != e.bob_bit) ? 1u : 0u;
    m.qber = static_cast<double>(m.n_errors) / static_cast<double>(m.n_sifted);
    return m;
}

inline void write_sifted_csv(std::ostream& os, const SiftedKey& key) {
    os << "pulse_index,alice_bit,bob_bit\n";
    for (const auto& e : key.entries) os << e.pulse_index << ',' << e.alice_bit << ',' << e.bob_bit << '\n';
}

} // namespace spqkd

#endif
