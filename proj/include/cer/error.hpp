#pragma once

#include <stdexcept>
#include <string>

namespace cer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments supplied by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Missing, malformed, or corrupt input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerically degenerate input (zero-norm vectors, non-finite values).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Remote embedding provider failure (transport, status, or protocol).
class ProviderError : public Error {
public:
    using Error::Error;
};

}  // namespace cer
