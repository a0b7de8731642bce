#pragma once

#include <stdexcept>
#include <string>

namespace tap {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a declared type invariant (range, ordering, finiteness).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A JSON document does not match the documented schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// A binary file is malformed (bad magic, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, short write).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tap
