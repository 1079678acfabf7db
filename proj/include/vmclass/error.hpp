#pragma once

#include <stdexcept>
#include <string>

namespace vmclass {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor shapes or layer parameters disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input data (CSV traces, manifests, windows) is malformed or insufficient.
class DataError : public Error {
public:
    using Error::Error;
};

// A weight container could not be read back.
class FormatError : public Error {
public:
    using Error::Error;
};

// A configuration value is missing or out of range.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

}  // namespace vmclass
