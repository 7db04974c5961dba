#pragma once

#include <stdexcept>
#include <string>

namespace luna {

/// Base class of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad header keys, schema violations, out-of-range values,
/// violated preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// The filesystem refused a read or write.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace luna
