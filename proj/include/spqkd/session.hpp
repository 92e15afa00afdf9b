#ifndef SPQKD_SESSION_HPP
#define SPQKD_SESSION_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/protocol.hpp"
#include "spqkd/rng.hpp"
#include "spqkd/time_tags.hpp"

namespace spqkd {

/// Everything needed to replay one simulated acquisition.
struct ScenarioConfig {
    SourceParams source;
    ChannelParams channel;
    std::array<DetectorParams, 2> detectors{};  ///< APD1, APD2
    double pol_misalignment_deg = 0.0;
    std::vector<int> pattern{0, 1};
    double duration_s = 1.0;
    std::uint64_t seed = 0;
    double timing_jitter_ns = 0.0;  ///< optional Gaussian jitter (sigma) on detections

    [[nodiscard]] std::uint64_t pulse_count() const {
        return static_cast<std::uint64_t>(std::floor(duration_s * source.rep_rate_hz + 1e-9));
    }
};

inline void validate(const ScenarioConfig& cfg) {
    validate(cfg.source);
    validate(cfg.channel);
    for (const auto& d : cfg.detectors) validate(d);
    if (!(cfg.duration_s > 0.0)) throw InvalidParameter("duration_s must be > 0");
    if (cfg.pattern.empty()) throw InvalidParameter("pattern must be non-empty");
    if (!(cfg.timing_jitter_ns >= 0.0)) throw InvalidParameter("timing_jitter_ns must be >= 0");
}

// Pulses per independently seeded block. Each block owns the time span
// [first_pulse, end_pulse) * period for its dark counts.
inline constexpr std::uint64_t kPulseBlockSize = std::uint64_t{1} << 16;

struct SessionOptions {
    unsigned threads = 1;
};

struct QkdSession {
    std::vector<PulseRecord> alice;
    TimeTagStream stream;
};

namespace detail {

enum class Optics { B92Analyzers, HbtSplitter };

struct BlockPlan {
    PhotonNumberDist photons;
    double transmission;
    std::uint64_t period_ps;
    std::array<double, 2> efficiency;
    std::array<double, 2> dark_rate_per_ps;
};

inline std::vector<TimeTag> generate_block(const ScenarioConfig& cfg, const BlockPlan& plan, Optics optics,
                                           std::uint64_t block, std::uint64_t total_pulses) {
    const std::uint64_t first = block * kPulseBlockSize;
    const std::uint64_t last = std::min(first + kPulseBlockSize, total_pulses);
    Rng rng(derive_substream_seed(cfg.seed, block));

    const std::array<PolAngle, 2> analyzer{apd1_analyzer(cfg.pol_misalignment_deg),
                                           apd2_analyzer(cfg.pol_misalignment_deg)};
    std::vector<TimeTag> out;
    out.reserve(static_cast<std::size_t>(last - first) + 16);

    for (std::uint64_t k = first; k < last; ++k) {
        const std::uint64_t trigger = k * plan.period_ps;
        out.push_back({Channel::Trigger, trigger});
        const int n = sample_photon_number(plan.photons, rng);
        if (n == 0) continue;
        const int bit = cfg.pattern[static_cast<std::size_t>(k % cfg.pattern.size())];
        const PolAngle state = b92_state(bit);
        for (int i = 0; i < n; ++i) {
            if (!rng.bernoulli(plan.transmission)) continue;
            const std::size_t arm = rng.uniform() < 0.5 ? 0 : 1;
            if (optics == Optics::B92Analyzers && !rng.bernoulli(malus_prob(state, analyzer[arm]))) continue;
            if (!rng.bernoulli(plan.efficiency[arm])) continue;
            double delay_ns = cfg.source.sync_delay_ns + sample_emission_delay(cfg.source.lifetime_ns, rng);
            if (cfg.timing_jitter_ns > 0.0) delay_ns += cfg.timing_jitter_ns * rng.normal();
            const double t = static_cast<double>(trigger) + std::floor(delay_ns * 1e3);
            out.push_back({arm == 0 ? Channel::Apd1 : Channel::Apd2, static_cast<std::uint64_t>(std::max(t, 0.0))});
        }
    }

    // Dark counts: homogeneous Poisson process over the block's time span.
    const double span_begin = static_cast<double>(first * plan.period_ps);
    const double span_end = static_cast<double>(last * plan.period_ps);
    for (std::size_t d = 0; d < 2; ++d) {
        if (plan.dark_rate_per_ps[d] <= 0.0) continue;
        const double mean_gap = 1.0 / plan.dark_rate_per_ps[d];
        for (double t = span_begin + rng.exponential(mean_gap); t < span_end; t += rng.exponential(mean_gap))
            out.push_back({d == 0 ? Channel::Apd1 : Channel::Apd2, static_cast<std::uint64_t>(std::floor(t))});
    }
    std::sort(out.begin(), out.end(), tag_less);
    return out;
}

inline TimeTagStream run_engine(const ScenarioConfig& cfg, Optics optics, const SessionOptions& opts) {
    validate(cfg);
    BlockPlan plan{photon_number_dist(cfg.source),
                   cfg.channel.transmission(),
                   period_ps(cfg.source.rep_rate_hz),
                   {cfg.detectors[0].efficiency, cfg.detectors[1].efficiency},
                   {cfg.detectors[0].dark_rate_hz * 1e-12, cfg.detectors[1].dark_rate_hz * 1e-12}};

    const std::uint64_t total = cfg.pulse_count();
    const std::uint64_t n_blocks = (total + kPulseBlockSize - 1) / kPulseBlockSize;
    std::vector<std::vector<TimeTag>> blocks(static_cast<std::size_t>(n_blocks));

    const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(std::max<std::uint64_t>(n_blocks, 1))));
    if (threads == 1) {
        for (std::uint64_t b = 0; b < n_blocks; ++b)
            blocks[static_cast<std::size_t>(b)] = generate_block(cfg, plan, optics, b, total);
    } else {
        std::atomic<std::uint64_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i)
            pool.emplace_back([&] {
                for (std::uint64_t b = next++; b < n_blocks; b = next++)
                    blocks[static_cast<std::size_t>(b)] = generate_block(cfg, plan, optics, b, total);
            });
    }

    // Single-owner merge. Blocks are internally sorted and only detections
    // near a block boundary can overlap the next block, so a final sort over
    // the concatenation is cheap.
    TimeTagStream stream;
    std::size_t n_events = 0;
    for (const auto& b : blocks) n_events += b.size();
    stream.events.reserve(n_events);
    for (auto& b : blocks) {
        const auto mid = stream.events.size();
        stream.events.insert(stream.events.end(), b.begin(), b.end());
        std::inplace_merge(stream.events.begin(), stream.events.begin() + static_cast<std::ptrdiff_t>(mid),
                           stream.events.end(), tag_less);
        std::vector<TimeTag>().swap(b);
    }
    return stream;
}

} // namespace detail

/// Simulates the B92 link: Alice's pulse records and the time-tagger stream
/// (triggers plus APD1/APD2 detections, signal and dark).
inline QkdSession run_qkd_session(const ScenarioConfig& cfg, const SessionOptions& opts = {}) {
    QkdSession s;
    s.stream = detail::run_engine(cfg, detail::Optics::B92Analyzers, opts);
    s.alice = encode_pattern(cfg.pattern, cfg.pulse_count());
    return s;
}

/// Same engine with the analyzers replaced by a bare 50/50 splitter.
inline TimeTagStream run_hbt_session(const ScenarioConfig& cfg, const SessionOptions& opts = {}) {
    return detail::run_engine(cfg, detail::Optics::HbtSplitter, opts);
}

} // namespace spqkd

#endif
