#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iotfp {

enum class ErrorCode {
    EmptyFeature,
    UndefinedDistance,
    UndefinedDivergence,
    IndependenceUntestable,
    UnsupportedSize,
    InvalidArgument,
    Overload,
    EmptyProfile,
    LabelMismatch,
    TooFewProfiles,
    CombinatorialGuard,
    MalformedShaping,
    SingleClass,
    Parse,
    Io,
    UnknownExperiment,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::EmptyFeature: return "empty-feature";
    case ErrorCode::UndefinedDistance: return "undefined-distance";
    case ErrorCode::UndefinedDivergence: return "undefined-divergence";
    case ErrorCode::IndependenceUntestable: return "independence-untestable";
    case ErrorCode::UnsupportedSize: return "unsupported-size";
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::Overload: return "overload";
    case ErrorCode::EmptyProfile: return "empty-profile";
    case ErrorCode::LabelMismatch: return "label-mismatch";
    case ErrorCode::TooFewProfiles: return "too-few-profiles";
    case ErrorCode::CombinatorialGuard: return "combinatorial-guard";
    case ErrorCode::MalformedShaping: return "malformed-shaping";
    case ErrorCode::SingleClass: return "single-class";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    case ErrorCode::UnknownExperiment: return "unknown-experiment";
    }
    return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

} // namespace iotfp
