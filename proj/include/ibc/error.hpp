#ifndef IBC_ERROR_HPP
#define IBC_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace ibc {

enum class ErrorKind {
    InvalidParams,
    EckmannMassless,
    ConditionCViolated,
    EpsilonTooLarge,
    MasslessNucleon,
    EvenAxisCount,
    DimensionMismatch,
    BasisTooLarge,
    QuadNotConverged,
    ExponentWindowViolated,
    MasslessWithoutShift,
    IndexError,
    BasisMismatch,
    NotConverged,
    SolveNotConverged,
    InsufficientPoints,
    ConfigError,
};

constexpr std::string_view to_string(ErrorKind k) noexcept {
    switch (k) {
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::EckmannMassless: return "EckmannMassless";
    case ErrorKind::ConditionCViolated: return "ConditionCViolated";
    case ErrorKind::EpsilonTooLarge: return "EpsilonTooLarge";
    case ErrorKind::MasslessNucleon: return "MasslessNucleon";
    case ErrorKind::EvenAxisCount: return "EvenAxisCount";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::BasisTooLarge: return "BasisTooLarge";
    case ErrorKind::QuadNotConverged: return "QuadNotConverged";
    case ErrorKind::ExponentWindowViolated: return "ExponentWindowViolated";
    case ErrorKind::MasslessWithoutShift: return "MasslessWithoutShift";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::BasisMismatch: return "BasisMismatch";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SolveNotConverged: return "SolveNotConverged";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

} // namespace ibc

#endif
