#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace advreg {

enum class ErrorCode {
    dimension_mismatch,
    non_finite,
    invalid_argument,
    parse_error,
    io_error,
    training_diverged,
    config_error,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace advreg
