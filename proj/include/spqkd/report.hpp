#ifndef SPQKD_REPORT_HPP
#define SPQKD_REPORT_HPP

#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spqkd/errors.hpp"

namespace spqkd {

/// Summary of one CLI invocation.
struct RunReport {
    std::string command;
    std::vector<std::pair<std::string, std::string>> config_echo;  // "section.key" -> raw value
    std::optional<std::uint64_t> seed;
    std::vector<std::pair<std::string, double>> timings_ms;
    std::vector<std::string> outputs;
    std::vector<std::pair<std::string, double>> headline;

    void add_headline(std::string name, double value) { headline.emplace_back(std::move(name), value); }
};

enum class ReportFormat { Human, Csv, Structured };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "human") return ReportFormat::Human;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "structured" || s == "json") return ReportFormat::Structured;
    throw ConfigError("unknown report format '" + s + "' (human, csv, structured)");
}

inline std::string report_extension(ReportFormat f) {
    switch (f) {
    case ReportFormat::Human: return "txt";
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Structured: return "json";
    }
    return "txt";
}

namespace detail {
inline std::string fmt_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}
} // namespace detail

/// Serializes a report with a fixed field order. Timings are wall-clock and
/// therefore only emitted on request, keeping default output reproducible.
inline std::string emit_report(const RunReport& r, ReportFormat format, bool include_timings = false) {
    std::ostringstream os;
    switch (format) {
    case ReportFormat::Csv: {
        os << "section,key,value\n";
        if (!r.command.empty()) os << "run,command," << detail::csv_field(r.command) << '\n';
        if (r.seed) os << "run,seed," << *r.seed << '\n';
        for (const auto& [k, v] : r.config_echo) os << "config," << detail::csv_field(k) << ',' << detail::csv_field(v) << '\n';
        for (const auto& [k, v] : r.headline) os << "headline," << detail::csv_field(k) << ',' << detail::fmt_number(v) << '\n';
        for (const auto& p : r.outputs) os << "output,path," << detail::csv_field(p) << '\n';
        if (include_timings)
            for (const auto& [k, v] : r.timings_ms) os << "timing_ms," << detail::csv_field(k) << ',' << detail::fmt_number(v) << '\n';
        break;
    }
    case ReportFormat::Structured: {
        nlohmann::ordered_json j;
        j["command"] = r.command;
        j["seed"] = r.seed ? nlohmann::ordered_json(*r.seed) : nlohmann::ordered_json(nullptr);
        j["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.config_echo) j["config"][k] = v;
        j["headline"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : r.headline) j["headline"][k] = v;
        j["outputs"] = r.outputs;
        if (include_timings) {
            j["timings_ms"] = nlohmann::ordered_json::object();
            for (const auto& [k, v] : r.timings_ms) j["timings_ms"][k] = v;
        }
        os << j.dump(2) << '\n';
        break;
    }
    case ReportFormat::Human: {
        os << "command: " << (r.command.empty() ? "-" : r.command) << '\n';
        if (r.seed) os << "seed:    " << *r.seed << '\n';
        if (!r.headline.empty()) {
            os << "\nresults\n";
            for (const auto& [k, v] : r.headline) os << "  " << k << " = " << detail::fmt_number(v) << '\n';
        }
        if (!r.config_echo.empty()) {
            os << "\nconfiguration\n";
            for (const auto& [k, v] : r.config_echo) os << "  " << k << " = " << v << '\n';
        }
        if (!r.outputs.empty()) {
            os << "\noutputs\n";
            for (const auto& p : r.outputs) os << "  " << p << '\n';
        }
        if (include_timings && !r.timings_ms.empty()) {
            os << "\ntimings (ms)\n";
            for (const auto& [k, v] : r.timings_ms) os << "  " << k << " = " << detail::fmt_number(v) << '\n';
        }
        break;
    }
    }
    return os.str();
}

} // namespace spqkd

#endif
