#pragma once

#include <stdexcept>
#include <string>

namespace biofuse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside the operation's domain (bad extents, empty inputs, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Class label or element index out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward from a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or degenerate configuration / dataset.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries the offending line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// A NaN or Inf produced by a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Model file errors. Each failure mode is a distinct type.
class FormatError : public Error {
 public:
  using Error::Error;
};
class MagicMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};
class TruncatedFileError : public FormatError {
 public:
  using FormatError::FormatError;
};
class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};
class FingerprintMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace biofuse
