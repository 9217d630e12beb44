#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bottdeg {

enum class ErrorKind {
    SingularMap,
    AmbientMismatch,
    ZeroSubspace,
    RankMismatch,
    NotIsometry,
    RankTooLarge,
    GridCoverage,
    BadWindow,
    NotNested,
    BoundaryHit,
    IrregularRoot,
    SeedExhaustion,
    RefinementLimit,
    NetExplosion,
    EmptyOverlap,
    BandwidthOverflow,
    BallConditionFail,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::SingularMap: return "SingularMap";
    case ErrorKind::AmbientMismatch: return "AmbientMismatch";
    case ErrorKind::ZeroSubspace: return "ZeroSubspace";
    case ErrorKind::RankMismatch: return "RankMismatch";
    case ErrorKind::NotIsometry: return "NotIsometry";
    case ErrorKind::RankTooLarge: return "RankTooLarge";
    case ErrorKind::GridCoverage: return "GridCoverage";
    case ErrorKind::BadWindow: return "BadWindow";
    case ErrorKind::NotNested: return "NotNested";
    case ErrorKind::BoundaryHit: return "BoundaryHit";
    case ErrorKind::IrregularRoot: return "IrregularRoot";
    case ErrorKind::SeedExhaustion: return "SeedExhaustion";
    case ErrorKind::RefinementLimit: return "RefinementLimit";
    case ErrorKind::NetExplosion: return "NetExplosion";
    case ErrorKind::EmptyOverlap: return "EmptyOverlap";
    case ErrorKind::BandwidthOverflow: return "BandwidthOverflow";
    case ErrorKind::BallConditionFail: return "BallConditionFail";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

// All library failures are reported through this type; `kind()` is the
// machine-readable part, `what()` carries the human-readable context.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace bottdeg
