#pragma once

#include <stdexcept>
#include <string>

namespace prenet {

// Base of every error the library raises. The CLI maps each subclass onto an
// exit code, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedKernelError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (stage out of range, backward on
// a non-scalar, mismatched lambda list, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

// Bad magic, unknown version, malformed header.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally readable file whose content is inconsistent (length, CRC,
// parameter count).
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace prenet
