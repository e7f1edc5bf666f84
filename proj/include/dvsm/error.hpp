#pragma once

#include <stdexcept>
#include <string>

namespace dvsm {

/// Bad arguments, inconsistent configuration or plan.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input files, stale or mismatched teacher caches, I/O failures.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatches between tensors.
class DimensionError : public UsageError {
public:
    using UsageError::UsageError;
};

/// Non-finite values, failed gradient checks, undefined statistics.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dvsm
