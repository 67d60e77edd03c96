#pragma once

#include <stdexcept>
#include <string>

namespace qcov {

enum class ErrorKind {
    geometry,
    containment,
    connectivity,
    precondition,
    topology,
    numerical,
    solver,
    ellipticity,
    constraint,
    bijectivity,
    seam,
    domain,
    argument,
    integration,
    convergence,
    progress,
    completeness,
    config,
    io,
};

const char* to_string(ErrorKind k);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + msg), kind_(kind), detail_(msg) {}
    ErrorKind kind() const { return kind_; }
    // Message without the kind prefix.
    const std::string& detail() const { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::geometry: return "geometry";
        case ErrorKind::containment: return "containment";
        case ErrorKind::connectivity: return "connectivity";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::topology: return "topology";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::solver: return "solver";
        case ErrorKind::ellipticity: return "ellipticity";
        case ErrorKind::constraint: return "constraint";
        case ErrorKind::bijectivity: return "bijectivity";
        case ErrorKind::seam: return "seam";
        case ErrorKind::domain: return "domain";
        case ErrorKind::argument: return "argument";
        case ErrorKind::integration: return "integration";
        case ErrorKind::convergence: return "convergence";
        case ErrorKind::progress: return "progress";
        case ErrorKind::completeness: return "completeness";
        case ErrorKind::config: return "config";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

}  // namespace qcov
