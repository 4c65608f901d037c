#pragma once

#include <stdexcept>
#include <string>

namespace ipi {

/// Base class for every error raised by the runtime and the harness.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed caller input (empty instruction, bad thresholds, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

/// A management instruction could not be bound to a single task.
class AmbiguityError : public Error {
public:
    using Error::Error;
};

/// Clock misuse: tick skipped, regressed, or seq out of order.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

/// Attempted read of a frame beyond the current tick.
class CausalityError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (bad JSON, 4xx from an endpoint, dimension drift).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input file failed schema validation.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Transient failures persisted after all retries.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

/// A scripted run asked for a trace entry that does not exist. Always fatal.
class CoverageError : public Error {
public:
    using Error::Error;
};

}  // namespace ipi
