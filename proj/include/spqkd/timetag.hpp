#ifndef SPQKD_TIMETAG_HPP
#define SPQKD_TIMETAG_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/protocol.hpp"
#include "spqkd/security.hpp"
#include "spqkd/time_tags.hpp"

namespace spqkd {

/// Detection counts versus trigger-relative delay over one period.
struct DelayHistogram {
    double bin_width_ns = 1.0;
    std::vector<double> counts;

    [[nodiscard]] double total() const {
        double s = 0.0;
        for (double c : counts) s += c;
        return s;
    }
    [[nodiscard]] std::size_t argmax() const {
        return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
};

struct ChannelMask {
    bool apd1 = true;
    bool apd2 = true;

    [[nodiscard]] bool accepts(Channel c) const {
        return (c == Channel::Apd1 && apd1) || (c == Channel::Apd2 && apd2);
    }
};

namespace detail {
// Calls fn(tag, delay_ps) for each detection with a preceding trigger.
// Delays are folded into one period so that missing triggers do not
// produce out-of-range delays.
template <typename Fn>
void for_each_delay(const TimeTagStream& stream, std::uint64_t period, Fn&& fn) {
    bool have_trigger = false;
    std::uint64_t last = 0;
    for (const auto& e : stream.events) {
        if (e.channel == Channel::Trigger) {
            have_trigger = true;
            last = e.t_ps;
        } else if (have_trigger) {
            fn(e, (e.t_ps - last) % period);
        }
    }
}
} // namespace detail

/// Folds detections against the preceding trigger. Detections recorded
/// before the first trigger have no reference and are skipped.
inline DelayHistogram build_histogram(const TimeTagStream& stream, double rep_rate_hz, double bin_width_ns = 1.0,
                                      ChannelMask channels = {}) {
    if (!(bin_width_ns > 0.0)) throw InvalidParameter("bin width must be > 0");
    if (stream.count(Channel::Trigger) == 0) throw EmptyStream("stream has no trigger events");
    const std::uint64_t period = period_ps(rep_rate_hz);
    const double width_ps = bin_width_ns * 1e3;
    DelayHistogram h;
    h.bin_width_ns = bin_width_ns;
    h.counts.assign(static_cast<std::size_t>(std::ceil(static_cast<double>(period) / width_ps - 1e-9)), 0.0);
    detail::for_each_delay(stream, period, [&](const TimeTag& e, std::uint64_t delay) {
        if (!channels.accepts(e.channel)) return;
        const auto bin = std::min(h.counts.size() - 1, static_cast<std::size_t>(static_cast<double>(delay) / width_ps));
        h.counts[bin] += 1.0;
    });
    return h;
}

inline void write_histogram_csv(std::ostream& os, const DelayHistogram& h) {
    os << "bin_ns,counts\n";
    char buf[96];
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6g,%.10g\n", static_cast<double>(i) * h.bin_width_ns, h.counts[i]);
        os << buf;
    }
}

inline DelayHistogram read_histogram_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty histogram CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "bin_ns,counts") throw FormatError("histogram CSV must start with header 'bin_ns,counts'");
    std::vector<double> starts;
    DelayHistogram h;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("bad histogram CSV row '" + line + "'");
        try {
            starts.push_back(std::stod(line.substr(0, comma)));
            h.counts.push_back(std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw FormatError("bad histogram CSV row '" + line + "'");
        }
    }
    if (starts.size() < 2) throw FormatError("histogram CSV needs at least two bins");
    h.bin_width_ns = starts[1] - starts[0];
    if (!(h.bin_width_ns > 0.0)) throw FormatError("histogram bins must be ascending");
    return h;
}

/// Keeps triggers and the detections whose delay lies in [t0, t0 + dt).
inline TimeTagStream apply_window(const TimeTagStream& stream, const FilterWindow& window, double rep_rate_hz) {
    const std::uint64_t period = period_ps(rep_rate_hz);
    validate(window, static_cast<double>(period) * 1e-3);
    const std::uint64_t lo = window.start_ps(), hi = window.end_ps();
    TimeTagStream out;
    bool have_trigger = false;
    std::uint64_t last = 0;
    for (const auto& e : stream.events) {
        if (e.channel == Channel::Trigger) {
            have_trigger = true;
            last = e.t_ps;
            out.events.push_back(e);
            continue;
        }
        if (!have_trigger) continue;
        const std::uint64_t delay = (e.t_ps - last) % period;
        if (delay >= lo && delay < hi) out.events.push_back(e);
    }
    return out;
}

/// Window start anchored one bin-width ahead of the histogram maximum.
inline double default_window_start(const DelayHistogram& h) {
    return std::max(0.0, static_cast<double>(h.argmax()) * h.bin_width_ns - 1.0);
}

struct FilterScanRow {
    double delta_t_ns = 0.0;
    double sifted_rate_bps = 0.0;  ///< measured key rate: sifted conclusive clicks per second / 2
    double qber = 0.0;             ///< 0 when nothing was sifted
    double skr_bps = 0.0;      ///< secure-fraction-corrected rate on the same clicks
    std::uint64_t n_sifted = 0;
    std::uint64_t n_errors = 0;
};

/// QBER and key rate as the acceptance window widens from t0.
inline std::vector<FilterScanRow> filter_scan(const TimeTagStream& stream, const std::vector<PulseRecord>& alice,
                                              const SourceParams& source, double t0_ns,
                                              const std::vector<double>& delta_list) {
    if (delta_list.empty()) throw InvalidParameter("delta list must be non-empty");
    for (std::size_t i = 1; i < delta_list.size(); ++i)
        if (!(delta_list[i] > delta_list[i - 1])) throw InvalidParameter("delta list must be ascending");
    if (alice.empty()) throw InvalidParameter("no pulse records");
    const double n_pulses = static_cast<double>(alice.size());
    const double duration_s = n_pulses / source.rep_rate_hz;

    std::vector<FilterScanRow> rows;
    for (double dt : delta_list) {
        const auto filtered = apply_window(stream, {t0_ns, dt}, source.rep_rate_hz);
        const auto key = b92_sift(alice, filtered, source.rep_rate_hz);
        FilterScanRow row;
        row.delta_t_ns = dt;
        if (key.size() > 0) {
            const auto m = measure_qber(key);
            row.n_sifted = m.n_sifted;
            row.n_errors = m.n_errors;
            row.qber = m.qber;
            row.sifted_rate_bps = static_cast<double>(m.n_sifted) / duration_s / 2.0;
            const double p_click = static_cast<double>(m.n_sifted) / n_pulses;
            row.skr_bps = skr_from_measurement(p_click, m.qber, source.mu, source.g2_zero, source.rep_rate_hz).skr_bps;
        }
        rows.push_back(row);
    }
    return rows;
}

inline void write_scan_csv(std::ostream& os, const std::vector<FilterScanRow>& rows) {
    os << "delta_t_ns,sifted_rate_bps,qber,skr_bps\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6g,%.8g,%.8g,%.8g\n", r.delta_t_ns, r.sifted_rate_bps, r.qber, r.skr_bps);
        os << buf;
    }
}

struct G2Estimate {
    double value = 0.0;
    double uncertainty = 0.0;
    double central_counts = 0.0;
    double side_mean = 0.0;
    std::vector<double> side_counts;  ///< peaks -M..-1, +1..+M
};

/// Pulsed g2(0) from APD1 x APD2 cross-correlation: the coincidence count in
/// the zero-delay period divided by the mean over `side_peaks_per_side`
/// neighbouring periods on each side. Each peak integrates one full period
/// centred on its nominal delay.
inline G2Estimate estimate_g2(const TimeTagStream& stream, double rep_rate_hz, int side_peaks_per_side = 10) {
    if (side_peaks_per_side < 5) throw InvalidParameter("need at least 5 side peaks per side");
    std::vector<std::int64_t> a, b;
    for (const auto& e : stream.events) {
        if (e.channel == Channel::Apd1) a.push_back(static_cast<std::int64_t>(e.t_ps));
        else if (e.channel == Channel::Apd2) b.push_back(static_cast<std::int64_t>(e.t_ps));
    }
    if (a.empty() || b.empty()) throw InsufficientCoincidences("g2 needs detections on both APD channels");

    const auto period = static_cast<std::int64_t>(period_ps(rep_rate_hz));
    const std::int64_t reach = period * side_peaks_per_side + period / 2;
    std::vector<double> peaks(static_cast<std::size_t>(2 * side_peaks_per_side + 1), 0.0);
    std::size_t lo = 0;
    for (std::int64_t t1 : a) {
        while (lo < b.size() && b[lo] < t1 - reach) ++lo;
        for (std::size_t j = lo; j < b.size() && b[j] < t1 + reach; ++j) {
            // Peak m covers delays [m P - P/2, m P + P/2).
            const std::int64_t shifted = b[j] - t1 + reach;
            const auto m = static_cast<std::size_t>(shifted / period);
            if (m < peaks.size()) peaks[m] += 1.0;
        }
    }

    G2Estimate g;
    g.central_counts = peaks[static_cast<std::size_t>(side_peaks_per_side)];
    for (std::size_t i = 0; i < peaks.size(); ++i)
        if (i != static_cast<std::size_t>(side_peaks_per_side)) g.side_counts.push_back(peaks[i]);
    double side_total = 0.0;
    for (double c : g.side_counts) {
        if (c <= 0.0) throw InsufficientCoincidences("a side peak has zero coincidences");
        side_total += c;
    }
    g.side_mean = side_total / static_cast<double>(g.side_counts.size());
    g.value = g.central_counts / g.side_mean;
    // Poisson errors on the central count and on the summed side counts. An
    // empty central peak gets the one-count scale instead of zero.
    g.uncertainty = g.central_counts > 0.0
                        ? g.value * std::sqrt(1.0 / g.central_counts + 1.0 / side_total)
                        : 1.0 / g.side_mean;
    return g;
}

} // namespace spqkd

#endif
