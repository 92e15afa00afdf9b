#ifndef SPQKD_CONFIG_HPP
#define SPQKD_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spqkd/calibrate.hpp"
#include "spqkd/errors.hpp"
#include "spqkd/security.hpp"
#include "spqkd/session.hpp"

namespace spqkd {

// Flat sectioned key-value text:
//
//   # comment
//   [section]
//   key = value   # trailing comment
//
// Keys carry their units in the name (lifetime_ns, dark_rate_hz, ...).
class Config {
public:
    struct Entry {
        std::string section;
        std::string key;
        std::string value;
        std::size_t line = 0;
    };

    static Config parse(std::istream& is, std::string origin = "<config>") {
        Config cfg;
        cfg.origin_ = std::move(origin);
        std::string raw, section;
        std::size_t lineno = 0;
        while (std::getline(is, raw)) {
            ++lineno;
            std::string line = strip(raw.substr(0, raw.find('#')));
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') cfg.fail(lineno, "unterminated section header");
                section = strip(line.substr(1, line.size() - 2));
                if (section.empty()) cfg.fail(lineno, "empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) cfg.fail(lineno, "expected 'key = value'");
            if (section.empty()) cfg.fail(lineno, "key outside of any section");
            std::string key = strip(line.substr(0, eq)), value = strip(line.substr(eq + 1));
            if (key.empty()) cfg.fail(lineno, "empty key");
            if (cfg.find(section, key)) cfg.fail(lineno, "duplicate key " + section + "." + key);
            cfg.entries_.push_back({section, key, value, lineno});
        }
        return cfg;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        return parse(in, path);
    }

    /// Applies a `section.key=value` override, adding the key if absent.
    void set(const std::string& assignment) {
        const auto eq = assignment.find('=');
        const auto dot = assignment.rfind('.', eq);
        if (eq == std::string::npos || dot == std::string::npos || dot == 0)
            throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
        set(assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        if (auto* e = find_mut(section, key)) e->value = strip(value);
        else entries_.push_back({section, key, strip(value), 0});
    }

    [[nodiscard]] bool has(const std::string& section, const std::string& key) const { return find(section, key); }
    [[nodiscard]] bool has_section(const std::string& section) const {
        return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.section == section; });
    }

    /// Section names in first-appearance order.
    [[nodiscard]] std::vector<std::string> sections() const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (std::find(out.begin(), out.end(), e.section) == out.end()) out.push_back(e.section);
        return out;
    }

    [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }

    std::string get_string(const std::string& section, const std::string& key) const {
        const Entry* e = find(section, key);
        if (!e) throw ConfigError(origin_ + ": missing required key " + section + "." + key);
        used_.insert(section + "." + key);
        return e->value;
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(section, key, get_string(section, key));
    }
    double get_double(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    std::uint64_t get_u64(const std::string& section, const std::string& key) const {
        const std::string v = get_string(section, key);
        std::uint64_t out = 0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size())
            throw ConfigError(origin_ + ": " + section + "." + key + " must be an unsigned integer, got '" + v + "'");
        return out;
    }

    std::vector<double> get_list(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        std::stringstream ss(get_string(section, key));
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(to_double(section, key, strip(item)));
        if (out.empty()) throw ConfigError(origin_ + ": " + section + "." + key + " is an empty list");
        return out;
    }

    /// Rejects keys that no reader consumed (schema violations such as typos).
    void require_all_used() const {
        for (const auto& e : entries_)
            if (!used_.count(e.section + "." + e.key))
                throw ConfigError(origin_ + ": unknown key " + e.section + "." + e.key +
                                  (e.line ? " (line " + std::to_string(e.line) + ")" : std::string{}));
    }

    [[nodiscard]] const std::string& origin() const { return origin_; }

private:
    static std::string strip(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return std::string(s.substr(b, e - b + 1));
    }

    double to_double(const std::string& section, const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos == v.size()) return d;
        } catch (const std::exception&) {
        }
        throw ConfigError(origin_ + ": " + section + "." + key + " must be a number, got '" + v + "'");
    }

    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw ConfigError(origin_ + ":" + std::to_string(line) + ": " + msg);
    }

    const Entry* find(const std::string& section, const std::string& key) const {
        for (const auto& e : entries_)
            if (e.section == section && e.key == key) return &e;
        return nullptr;
    }
    Entry* find_mut(const std::string& section, const std::string& key) {
        for (auto& e : entries_)
            if (e.section == section && e.key == key) return &e;
        return nullptr;
    }

    std::string origin_;
    std::vector<Entry> entries_;
    mutable std::set<std::string> used_;
};

// --- Scenario schema ------------------------------------------------------

inline std::vector<int> parse_pattern(const std::string& s) {
    std::vector<int> bits;
    for (char c : s) {
        if (c == '0' || c == '1') bits.push_back(c - '0');
        else if (c != ' ' && c != ',') throw ConfigError("pattern may only contain 0 and 1, got '" + s + "'");
    }
    if (bits.empty()) throw ConfigError("pattern must be non-empty");
    return bits;
}

inline SourceParams read_source(const Config& c) {
    SourceParams s;
    s.mu = c.get_double("source", "mu");
    s.g2_zero = c.get_double("source", "g2_zero");
    s.lifetime_ns = c.get_double("source", "lifetime_ns");
    s.rep_rate_hz = c.get_double("source", "rep_rate_hz");
    s.sync_delay_ns = c.get_double("source", "sync_delay_ns", 0.0);
    return s;
}

inline std::array<DetectorParams, 2> read_detectors(const Config& c) {
    std::array<DetectorParams, 2> d{};
    const double eff = c.get_double("detectors", "efficiency", 1.0);
    const double dark = c.get_double("detectors", "dark_rate_hz", 0.0);
    d[0] = {c.get_double("detectors", "apd1_efficiency", eff), c.get_double("detectors", "apd1_dark_rate_hz", dark)};
    d[1] = {c.get_double("detectors", "apd2_efficiency", eff), c.get_double("detectors", "apd2_dark_rate_hz", dark)};
    return d;
}

/// Seed from the config or an explicit override; no implicit default.
inline std::uint64_t read_seed(const Config& c, std::optional<std::uint64_t> override_seed) {
    if (override_seed) {
        if (c.has("session", "seed")) c.get_u64("session", "seed");
        return *override_seed;
    }
    if (!c.has("session", "seed")) throw ConfigError(c.origin() + ": session.seed is required (or pass --seed)");
    return c.get_u64("session", "seed");
}

/// Builds a scenario. With a [calibration] section, setup transmission and
/// misalignment are solved from the measured link figures it lists.
inline ScenarioConfig read_scenario(const Config& c, std::optional<std::uint64_t> override_seed = std::nullopt) {
    ScenarioConfig s;
    s.source = read_source(c);
    s.channel.loss_db = c.get_double("channel", "loss_db", 0.0);
    s.detectors = read_detectors(c);
    s.pattern = parse_pattern(c.has("session", "pattern") ? c.get_string("session", "pattern") : "01");
    s.duration_s = c.get_double("session", "duration_s");
    s.seed = read_seed(c, override_seed);
    s.pol_misalignment_deg = c.get_double("session", "misalignment_deg", 0.0);
    s.timing_jitter_ns = c.get_double("session", "timing_jitter_ns", 0.0);

    if (c.has_section("calibration")) {
        if (c.has("channel", "setup_transmission") || c.has("session", "misalignment_deg"))
            throw ConfigError(c.origin() + ": [calibration] solves setup_transmission and misalignment_deg; do not set them");
        B92Targets t;
        t.signal_rate_per_apd_hz = c.get_double("calibration", "signal_rate_per_apd_hz");
        t.qber = c.get_double("calibration", "qber");
        t.qber_window = {c.get_double("calibration", "window_t0_ns"), c.get_double("calibration", "window_delta_t_ns")};
        // Solve at zero channel loss, then apply the configured loss on top.
        const double loss = s.channel.loss_db;
        s.channel.loss_db = 0.0;
        s = calibrate_b92_scenario(s, t);
        s.channel.loss_db = loss;
    } else {
        s.channel.setup_transmission = c.get_double("channel", "setup_transmission", 1.0);
    }
    validate(s);
    return s;
}

/// q either given directly or recovered from a measured QBER on a link
/// described by its signal and dark click rates.
inline double read_link_q(const Config& c, const std::string& section) {
    if (c.has(section, "q")) return c.get_double(section, "q");
    const std::string cal = section + ".q_calibration";
    const double rep = c.get_double(section, "rep_rate_hz");
    const auto in = rate_budget_inputs(2.0 * c.get_double(cal, "signal_rate_per_apd_hz"),
                                       c.get_double(cal, "dark_rate_per_apd_hz"), c.get_double(section, "lifetime_ns"),
                                       rep, c.get_double(cal, "delta_t_ns"), 0.0);
    return calibrate_q(c.get_double(cal, "measured_qber"), in);
}

struct NamedCurve {
    std::string name;
    LinkModel model;
};

/// Sweep configs: a shared [link] section plus one [curve.<name>] per curve.
inline std::vector<NamedCurve> read_curves(const Config& c) {
    LinkModel base;
    base.setup_transmission = c.get_double("link", "setup_transmission");
    base.detector_efficiency = c.get_double("link", "detector_efficiency");
    base.dark_rate_hz = c.get_double("link", "dark_rate_hz");
    base.lifetime_ns = c.get_double("link", "lifetime_ns");
    base.rep_rate_hz = c.get_double("link", "rep_rate_hz");
    base.q = read_link_q(c, "link");
    std::vector<NamedCurve> curves;
    for (const auto& sec : c.sections()) {
        if (sec.rfind("curve.", 0) != 0) continue;
        LinkModel m = base;
        m.mu = c.get_double(sec, "mu");
        m.g2_zero = c.get_double(sec, "g2_zero");
        m.delta_t_ns = c.get_double(sec, "delta_t_ns");
        curves.push_back({sec.substr(6), m});
    }
    if (curves.empty()) throw ConfigError(c.origin() + ": sweep config needs at least one [curve.<name>] section");
    return curves;
}

} // namespace spqkd

#endif
