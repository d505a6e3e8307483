#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skinres {

/// Failure categories. Each maps onto one CLI exit code.
enum class ErrorKind {
    io,
    schema,
    config,
    missing_prerequisite,
    degenerate_input,
    shape,
    contract,
    weight_store,
    fusion,
    inference,
    runtime,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Exit status used by the command line front end: 2 config, 3 missing prerequisite, 4 runtime.
int exit_code_for(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace skinres
