#ifndef SPQKD_TIME_TAGS_HPP
#define SPQKD_TIME_TAGS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "spqkd/errors.hpp"

namespace spqkd {

enum class Channel : std::uint8_t { Trigger = 0, Apd1 = 1, Apd2 = 2 };

inline bool is_detection(Channel c) { return c != Channel::Trigger; }

inline std::string_view channel_name(Channel c) {
    switch (c) {
    case Channel::Trigger: return "T";
    case Channel::Apd1: return "A1";
    case Channel::Apd2: return "A2";
    }
    return "?";
}

inline Channel parse_channel(std::string_view s) {
    if (s == "T") return Channel::Trigger;
    if (s == "A1") return Channel::Apd1;
    if (s == "A2") return Channel::Apd2;
    throw FormatError("unknown channel '" + std::string(s) + "'");
}

struct TimeTag {
    Channel channel = Channel::Trigger;
    std::uint64_t t_ps = 0;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

// Sort key: time first, then channel so that a trigger sorts ahead of a
// detection carrying the same timestamp.
inline bool tag_less(const TimeTag& a, const TimeTag& b) {
    return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.channel < b.channel;
}

/// Ordered detection and trigger events of one acquisition.
struct TimeTagStream {
    std::vector<TimeTag> events;

    [[nodiscard]] bool is_sorted() const { return std::is_sorted(events.begin(), events.end(), tag_less); }
    void sort() { std::sort(events.begin(), events.end(), tag_less); }

    [[nodiscard]] std::size_t count(Channel c) const {
        return static_cast<std::size_t>(
            std::count_if(events.begin(), events.end(), [c](const TimeTag& t) { return t.channel == c; }));
    }
    [[nodiscard]] std::size_t detection_count() const {
        return static_cast<std::size_t>(
            std::count_if(events.begin(), events.end(), [](const TimeTag& t) { return is_detection(t.channel); }));
    }

    friend bool operator==(const TimeTagStream&, const TimeTagStream&) = default;
};

/// Acceptance gate relative to the preceding trigger: [t0, t0 + delta_t).
struct FilterWindow {
    double t0_ns = 0.0;
    double delta_t_ns = 1.0;

    [[nodiscard]] std::uint64_t start_ps() const { return static_cast<std::uint64_t>(std::llround(t0_ns * 1e3)); }
    [[nodiscard]] std::uint64_t end_ps() const {
        return static_cast<std::uint64_t>(std::llround((t0_ns + delta_t_ns) * 1e3));
    }
};

inline void validate(const FilterWindow& w, double period_ns) {
    if (!(w.delta_t_ns > 0.0)) throw InvalidParameter("window delta_t_ns must be > 0");
    if (!(w.t0_ns >= 0.0)) throw InvalidParameter("window t0_ns must be >= 0");
    if (w.t0_ns + w.delta_t_ns > period_ns * (1.0 + 1e-12))
        throw InvalidParameter("window does not fit within one repetition period");
}

inline std::uint64_t period_ps(double rep_rate_hz) {
    return static_cast<std::uint64_t>(std::llround(1e12 / rep_rate_hz));
}

// --- CSV: header `channel,t_ps` -------------------------------------------

inline void write_csv(std::ostream& os, const TimeTagStream& s) {
    os << "channel,t_ps\n";
    for (const auto& e : s.events) os << channel_name(e.channel) << ',' << e.t_ps << '\n';
}

inline TimeTagStream read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || (line != "channel,t_ps" && line != "channel,t_ps\r"))
        throw FormatError("time-tag CSV must start with header 'channel,t_ps'");
    TimeTagStream s;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": missing comma");
        std::uint64_t t = 0;
        const std::string_view digits(line.data() + comma + 1, line.size() - comma - 1);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
            throw FormatError("line " + std::to_string(lineno) + ": bad timestamp");
        for (char ch : digits) t = t * 10 + static_cast<std::uint64_t>(ch - '0');
        s.events.push_back({parse_channel(std::string_view(line.data(), comma)), t});
    }
    return s;
}

// --- Binary: u64 count, then (u8 channel, u64 t_ps) records, little-endian --

namespace detail {
inline void put_u64_le(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b.data(), 8);
}
inline std::uint64_t get_u64_le(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw FormatError("truncated binary time-tag stream");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}
} // namespace detail

inline void write_binary(std::ostream& os, const TimeTagStream& s) {
    detail::put_u64_le(os, s.events.size());
    for (const auto& e : s.events) {
        os.put(static_cast<char>(e.channel));
        detail::put_u64_le(os, e.t_ps);
    }
}

inline TimeTagStream read_binary(std::istream& is) {
    const std::uint64_t n = detail::get_u64_le(is);
    TimeTagStream s;
    s.events.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
    for (std::uint64_t i = 0; i < n; ++i) {
        const int c = is.get();
        if (c == std::char_traits<char>::eof()) throw FormatError("truncated binary time-tag stream");
        if (c > 2) throw FormatError("bad channel byte " + std::to_string(c));
        s.events.push_back({static_cast<Channel>(c), detail::get_u64_le(is)});
    }
    return s;
}

} // namespace spqkd

#endif
