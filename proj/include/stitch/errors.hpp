#pragma once

#include <stdexcept>
#include <string>

namespace stitch {

// Base for all errors raised by the library. Subclasses mark the failure
// class so callers can map them to exit codes or retry policies.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: bad dimensions, unknown enum values, malformed
// config files.
struct ConfigError : Error {
    using Error::Error;
};

// A request exceeds a finite namespace (ID space, glyph layouts).
struct CapacityError : Error {
    using Error::Error;
};

// Caller violated an operation's preconditions (kind/argument mismatch,
// missing verdicts, duplicate ids).
struct ContractError : Error {
    using Error::Error;
};

// A patch grid is incomplete, duplicated, or mixes split factors.
struct GridError : Error {
    using Error::Error;
};

// Stored artifact (checkpoint, manifest, cache line) cannot be parsed.
struct FormatError : Error {
    using Error::Error;
};

// Rendered sequence does not fit the model's context window.
struct LengthError : Error {
    using Error::Error;
};

// Remote moderation provider failed after bounded retries, or returned a
// response that does not match the wire protocol.
struct ProviderError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg, long step) : Error(msg), step(step) {}
    long step;
};

}  // namespace stitch
