#pragma once

#include <stdexcept>
#include <string>

namespace conemoduli {

/// Error categories raised across the library. The CLI maps them onto exit codes.
enum class ErrorCode {
    AngleOutOfRange,
    GaussBonnetViolated,
    PunctureTooClose,
    ConstraintViolated,
    EvalAtPole,
    NonIntegrableProfile,
    ToleranceNotReached,
    HolderDataMissing,
    FDStepDegenerate,
    SingularCometric,
    ConfigInvalid,
    IoFailure,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::AngleOutOfRange: return "AngleOutOfRange";
    case ErrorCode::GaussBonnetViolated: return "GaussBonnetViolated";
    case ErrorCode::PunctureTooClose: return "PunctureTooClose";
    case ErrorCode::ConstraintViolated: return "ConstraintViolated";
    case ErrorCode::EvalAtPole: return "EvalAtPole";
    case ErrorCode::NonIntegrableProfile: return "NonIntegrableProfile";
    case ErrorCode::ToleranceNotReached: return "ToleranceNotReached";
    case ErrorCode::HolderDataMissing: return "HolderDataMissing";
    case ErrorCode::FDStepDegenerate: return "FDStepDegenerate";
    case ErrorCode::SingularCometric: return "SingularCometric";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace conemoduli
