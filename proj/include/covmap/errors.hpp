#pragma once

#include <stdexcept>
#include <string>

namespace covmap {

/// Input data failed validation (malformed files, inconsistent tables).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine could not produce a usable result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad command line or configuration value.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A forecaster asked for data past its forecast origin.
class LeakageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace covmap
