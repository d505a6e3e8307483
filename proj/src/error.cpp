#include "skinres/error.hpp"

namespace skinres {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::io: return "io";
        case ErrorKind::schema: return "schema";
        case ErrorKind::config: return "config";
        case ErrorKind::missing_prerequisite: return "missing_prerequisite";
        case ErrorKind::degenerate_input: return "degenerate_input";
        case ErrorKind::shape: return "shape";
        case ErrorKind::contract: return "contract";
        case ErrorKind::weight_store: return "weight_store";
        case ErrorKind::fusion: return "fusion";
        case ErrorKind::inference: return "inference";
        case ErrorKind::runtime: return "runtime";
    }
    return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::schema:
            return 2;
        case ErrorKind::missing_prerequisite:
        case ErrorKind::weight_store:
            return 3;
        default:
            return 4;
    }
}

}  // namespace skinres
