#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drg {

enum class ErrorKind {
    DimensionMismatch,
    SingularTransferMatrix,
    ImproperEntry,
    PoleAtOne,
    UnstableSystem,
    EmptyResult,
    EmptyPolytope,
    Unbounded,
    Infeasible,
    NotFinitelyDetermined,
    EmptyRobustMas,
    InfeasibleStart,
    UnstableInverse,
    SingularBStar,
    UnstableLoop,
    UnstableObserver,
    UnstableVertexLoop,
    SingularGBar,
    BothProjectionsInfeasible,
    Validation,
    Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularTransferMatrix: return "SingularTransferMatrix";
    case ErrorKind::ImproperEntry: return "ImproperEntry";
    case ErrorKind::PoleAtOne: return "PoleAtOne";
    case ErrorKind::UnstableSystem: return "UnstableSystem";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::EmptyPolytope: return "EmptyPolytope";
    case ErrorKind::Unbounded: return "Unbounded";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::NotFinitelyDetermined: return "NotFinitelyDetermined";
    case ErrorKind::EmptyRobustMas: return "EmptyRobustMas";
    case ErrorKind::InfeasibleStart: return "InfeasibleStart";
    case ErrorKind::UnstableInverse: return "UnstableInverse";
    case ErrorKind::SingularBStar: return "SingularBStar";
    case ErrorKind::UnstableLoop: return "UnstableLoop";
    case ErrorKind::UnstableObserver: return "UnstableObserver";
    case ErrorKind::UnstableVertexLoop: return "UnstableVertexLoop";
    case ErrorKind::SingularGBar: return "SingularGBar";
    case ErrorKind::BothProjectionsInfeasible: return "BothProjectionsInfeasible";
    case ErrorKind::Validation: return "Validation";
    case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) {
        throw Error(kind, what);
    }
}

} // namespace drg
