#pragma once

#include <stdexcept>
#include <string>

namespace rppg {

// Tensor/array shape or rank disagreement. Messages carry expected vs actual.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated operation precondition or invariant.
class ContractError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed, truncated or inconsistent file content.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem or OS level failure (open/read/write).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace rppg
