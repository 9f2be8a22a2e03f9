#pragma once

#include <stdexcept>
#include <string>

namespace anomsynth {

enum class ErrorKind {
    InvalidInput,
    UndefinedBase,
    Transport,
    Parse,
    Taxonomy,
    NotFound,
    StateConflict,
    NoCandidates,
    GenerationFailed,
    UndefinedDistance,
    Config,
    Io,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind is the
/// machine-readable part; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class TransportError : public Error {
public:
    TransportError(const std::string& message, int retries)
        : Error(ErrorKind::Transport, message), retries_(retries) {}

    int retries() const noexcept { return retries_; }

private:
    int retries_;
};

/// Carries the raw backend answer that could not be understood.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::string raw)
        : Error(ErrorKind::Parse, message), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class GenerationFailed : public Error {
public:
    GenerationFailed(const std::string& reason, int retries)
        : Error(ErrorKind::GenerationFailed,
                "mask generation failed after " + std::to_string(retries) +
                    " attempts: " + reason),
          reason_(reason), retries_(retries) {}

    const std::string& reason() const noexcept { return reason_; }
    int retries() const noexcept { return retries_; }

private:
    std::string reason_;
    int retries_;
};

[[noreturn]] inline void throw_invalid(const std::string& message) {
    throw Error(ErrorKind::InvalidInput, message);
}

}  // namespace anomsynth
