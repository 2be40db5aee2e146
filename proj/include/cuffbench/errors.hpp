#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cuffbench {

/// Precondition violated by a caller-supplied value (bad index, bad spec, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed external input. `location` is a byte offset for binary formats
/// and a JSON pointer (or "line:col") for text formats.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::string location)
      : std::runtime_error(message + " (at " + location + ")"),
        location_(std::move(location)) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

/// A session command that is not legal in the current state.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Stimulation backend refused or failed to deliver a train.
class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cuffbench
