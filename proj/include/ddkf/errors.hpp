#pragma once

#include <stdexcept>
#include <string>

namespace ddkf {

/// Machine-readable failure categories. The CLI maps each category to a
/// distinct exit code and emits it verbatim in the error payload.
enum class ErrorCategory {
    usage,
    config_invalid,
    schema_violation,
    io_error,
    insufficient_data,
    dimension_mismatch,
    numerical_failure,
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return "usage-error";
        case ErrorCategory::config_invalid: return "config-invalid";
        case ErrorCategory::schema_violation: return "schema-violation";
        case ErrorCategory::io_error: return "io-error";
        case ErrorCategory::insufficient_data: return "insufficient-data";
        case ErrorCategory::dimension_mismatch: return "dimension-mismatch";
        case ErrorCategory::numerical_failure: return "numerical-failure";
    }
    return "unknown";
}

inline int exit_code(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::usage: return 2;
        case ErrorCategory::config_invalid: return 3;
        case ErrorCategory::schema_violation: return 4;
        case ErrorCategory::io_error: return 5;
        case ErrorCategory::insufficient_data: return 6;
        case ErrorCategory::dimension_mismatch: return 7;
        case ErrorCategory::numerical_failure: return 8;
    }
    return 1;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

namespace detail {
inline void require(bool condition, ErrorCategory category, const std::string& message) {
    if (!condition) throw Error(category, message);
}
} // namespace detail

} // namespace ddkf
