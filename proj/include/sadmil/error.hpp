#pragma once

#include <stdexcept>
#include <string>

namespace sadmil {

// Base of every exception the library throws. The CLI maps the concrete
// subclasses onto exit codes (config 1, data 2, numeric 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or size disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Input outside the mathematical domain of an operation (log of x <= 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values encountered during evaluation or training.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace sadmil
