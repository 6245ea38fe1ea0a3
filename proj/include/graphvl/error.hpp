#pragma once

#include <stdexcept>
#include <string>

namespace graphvl {

enum class ErrorCode {
    FileNotFound,
    Unwritable,
    BadMagic,
    Truncated,
    TrailingBytes,
    LabelOutOfRange,
    NonFiniteValue,
    ShapeMismatch,
    InvalidArgument,
    BadConfig,
    Infeasible,
    NumericFailure,
    InvariantViolation,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::Unwritable: return "Unwritable";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::TrailingBytes: return "TrailingBytes";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::NumericFailure: return "NumericFailure";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Every failure in the library surfaces as this exception. `module()` names
/// the subsystem that raised it so the CLI can print a qualified message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string module, const std::string& message)
        : std::runtime_error(module + ": " + to_string(code) + ": " + message),
          code_(code), module_(std::move(module)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorCode code_;
    std::string module_;
};

/// Process exit code for an error: 2 bad input, 3 numeric failure, 4 invariant violation.
inline int exit_code_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::NumericFailure:
    case ErrorCode::Infeasible:
        return 3;
    case ErrorCode::InvariantViolation:
        return 4;
    default:
        return 2;
    }
}

} // namespace graphvl
