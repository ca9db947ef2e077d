#pragma once

#include <stdexcept>
#include <string>

namespace qnet {

enum class ErrorKind {
    invalid_argument,
    dimension_mismatch,
    not_hurwitz,
    singular_lyapunov,
    ill_posed,
    kind_mismatch,
    dangling_port,
    uncertified_cycle,
    cycle_cap,
    parse,
    usage,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::invalid_argument: return "invalid_argument";
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::not_hurwitz: return "not_hurwitz";
        case ErrorKind::singular_lyapunov: return "singular_lyapunov";
        case ErrorKind::ill_posed: return "ill_posed";
        case ErrorKind::kind_mismatch: return "kind_mismatch";
        case ErrorKind::dangling_port: return "dangling_port";
        case ErrorKind::uncertified_cycle: return "uncertified_cycle";
        case ErrorKind::cycle_cap: return "cycle_cap";
        case ErrorKind::parse: return "parse";
        case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

/// Base exception for everything the library reports. The kind lets callers
/// (notably the CLI exit-code mapping) branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace qnet
