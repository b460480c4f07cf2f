#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace probpose {

enum class ErrorCode {
    InvalidArgument,
    DegenerateGeometry,
    NonFinite,
    NotNormalized,
    // file formats
    MalformedJson,
    SchemaViolation,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    InvalidHeader,
    TrailingBytes,
    Io,
    // optimisation
    Diverged,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries a code so callers (and the CLI
/// exit-status mapping) can branch without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message)
        , m_code(code)
    {
    }

    ErrorCode code() const noexcept { return m_code; }

private:
    ErrorCode m_code;
};

} // namespace probpose
