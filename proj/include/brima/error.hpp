#pragma once

#include <stdexcept>
#include <string>

namespace brima {

// Base class for all library errors so callers can catch in one place.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Dimension or layout disagreement between tensors.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
  public:
    using Error::Error;
};

// Invalid configuration values.
class ConfigError : public Error {
  public:
    using Error::Error;
};

// Unreadable or syntactically broken input.
class ParseError : public Error {
  public:
    using Error::Error;
};

// Input parsed but violates the declared file schema.
class SchemaError : public Error {
  public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
  public:
    using Error::Error;
};

}  // namespace brima
