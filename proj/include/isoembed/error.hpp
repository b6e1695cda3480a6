#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isoembed {

enum class ErrorKind {
    OutOfDomain,
    NonPositiveMetric,
    GridTooSmall,
    BadParameter,
    BranchViolation,
    ValidityLoss,
    NoCertifiedRegion,
    NoConvergence,
    LeftRegion,
    UncertifiedNode,
    RankDeficient,
    FocalPoint,
    ImageOutsideChart,
    ParseError,
    ShapeMismatch,
    IoFailure,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
        case ErrorKind::OutOfDomain: return "OutOfDomain";
        case ErrorKind::NonPositiveMetric: return "NonPositiveMetric";
        case ErrorKind::GridTooSmall: return "GridTooSmall";
        case ErrorKind::BadParameter: return "BadParameter";
        case ErrorKind::BranchViolation: return "BranchViolation";
        case ErrorKind::ValidityLoss: return "ValidityLoss";
        case ErrorKind::NoCertifiedRegion: return "NoCertifiedRegion";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::LeftRegion: return "LeftRegion";
        case ErrorKind::UncertifiedNode: return "UncertifiedNode";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::FocalPoint: return "FocalPoint";
        case ErrorKind::ImageOutsideChart: return "ImageOutsideChart";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

/// Exception type thrown by every module; `kind()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace isoembed
