#ifndef SPQKD_ERRORS_HPP
#define SPQKD_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace spqkd {

// Coarse grouping used by the CLI to pick an exit status.
enum class ErrorCategory { Config, Model, Fit };

class Error : public std::runtime_error {
public:
    Error(std::string kind, ErrorCategory category, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), category_(category) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }
    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    std::string kind_;
    ErrorCategory category_;
};

#define SPQKD_DEFINE_ERROR(Name, Category)                                        \
    class Name : public Error {                                                   \
    public:                                                                       \
        explicit Name(const std::string& what) : Error(#Name, Category, what) {} \
    };

SPQKD_DEFINE_ERROR(ConfigError, ErrorCategory::Config)
SPQKD_DEFINE_ERROR(InvalidStatistics, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(InvalidParameter, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(EmptyStream, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(InsufficientCoincidences, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(UnmatchedEvent, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(EmptyKey, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(DomainError, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(OutOfTable, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(SecurityViolation, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(Infeasible, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(FormatError, ErrorCategory::Model)
SPQKD_DEFINE_ERROR(FitDiverged, ErrorCategory::Fit)
SPQKD_DEFINE_ERROR(InsufficientDecay, ErrorCategory::Fit)

#undef SPQKD_DEFINE_ERROR

// Exit codes of the command-line tool.
inline int exit_code(ErrorCategory c) noexcept {
    switch (c) {
    case ErrorCategory::Config: return 2;
    case ErrorCategory::Model: return 3;
    case ErrorCategory::Fit: return 4;
    }
    return 1;
}

} // namespace spqkd

#endif
