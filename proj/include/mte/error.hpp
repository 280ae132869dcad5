#pragma once

#include <stdexcept>
#include <string>

namespace mte {

/** @brief Base class for every error raised by the library. */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user configuration: unknown keys, missing columns, invalid parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot support the requested computation.
class DataError : public Error {
public:
    using Error::Error;
};

/// An empty or degenerate (d, z) cell.
class OverlapError : public DataError {
public:
    using DataError::DataError;
};

/// Singular or ill-conditioned matrices, failed brackets and similar.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mte
