#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fence {

enum class ErrorCode {
    // validation
    DimensionMismatch,
    OrderOutOfRange,
    DegreesOfFreedomTooSmall,
    TooManyCandidates,
    UnknownName,
    InvalidDataset,
    MissingSamplingVariances,
    NotFullModelReference,
    LengthMismatch,
    EmptySpace,
    MissingFit,
    UnsupportedRandomStructure,
    UnsupportedFamily,
    InvalidConfig,
    MalformedHeader,
    NonNumericCell,
    InconsistentNesting,
    IoFailure,
    // numerical
    RankDeficient,
    DegenerateResidual,
    NonPositiveDefinite,
    OptimizerFailure,
    ZeroSigma,
    NoInteriorPeak,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::OrderOutOfRange: return "OrderOutOfRange";
        case ErrorCode::DegreesOfFreedomTooSmall: return "DegreesOfFreedomTooSmall";
        case ErrorCode::TooManyCandidates: return "TooManyCandidates";
        case ErrorCode::UnknownName: return "UnknownName";
        case ErrorCode::InvalidDataset: return "InvalidDataset";
        case ErrorCode::MissingSamplingVariances: return "MissingSamplingVariances";
        case ErrorCode::NotFullModelReference: return "NotFullModelReference";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptySpace: return "EmptySpace";
        case ErrorCode::MissingFit: return "MissingFit";
        case ErrorCode::UnsupportedRandomStructure: return "UnsupportedRandomStructure";
        case ErrorCode::UnsupportedFamily: return "UnsupportedFamily";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::NonNumericCell: return "NonNumericCell";
        case ErrorCode::InconsistentNesting: return "InconsistentNesting";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::RankDeficient: return "RankDeficient";
        case ErrorCode::DegenerateResidual: return "DegenerateResidual";
        case ErrorCode::NonPositiveDefinite: return "NonPositiveDefinite";
        case ErrorCode::OptimizerFailure: return "OptimizerFailure";
        case ErrorCode::ZeroSigma: return "ZeroSigma";
        case ErrorCode::NoInteriorPeak: return "NoInteriorPeak";
    }
    return "Unknown";
}

/// True for failures of the numerical machinery (as opposed to bad input).
constexpr bool is_numerical(ErrorCode code) {
    switch (code) {
        case ErrorCode::RankDeficient:
        case ErrorCode::DegenerateResidual:
        case ErrorCode::NonPositiveDefinite:
        case ErrorCode::OptimizerFailure:
        case ErrorCode::ZeroSigma:
        case ErrorCode::NoInteriorPeak:
            return true;
        default:
            return false;
    }
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace fence
