#pragma once

#include <stdexcept>
#include <string>

namespace layerprobe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad JSON, bad magic, truncated payload.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A well-formed input that violates a data invariant. `location` names the
/// offending item, field, or matrix cell.
class InvariantError : public Error {
 public:
  InvariantError(const std::string& message, std::string location)
      : Error(location.empty() ? message : location + ": " + message),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

/// Caller passed arguments outside an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace layerprobe
