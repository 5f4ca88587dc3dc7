#pragma once

#include <stdexcept>
#include <string>

namespace qcbm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration, out-of-range arguments, scheme/net mismatches.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Mismatched dimensions between operands.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf inputs or results.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace qcbm
