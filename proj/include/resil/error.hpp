#pragma once

#include <stdexcept>
#include <string>

namespace resil {

// Error hierarchy. Every failure the library reports is one of these; the CLI
// maps ConfigError to exit code 2 and IoError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Time window or index outside the data it refers to.
class RangeError : public Error {
 public:
  using Error::Error;
};

// Operation called on an object that is not in the required state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Scenario or configuration rejected by validation. `element` names the
// offending item (e.g. "links[3].b" or "attacks[ddos1].targets").
class ConfigError : public Error {
 public:
  ConfigError(std::string element, const std::string& what)
      : Error(element.empty() ? what : element + ": " + what), element_(std::move(element)) {}

  const std::string& element() const noexcept { return element_; }

 private:
  std::string element_;
};

// A route crosses a link that is down or absent.
class RouteError : public Error {
 public:
  RouteError(std::string link, const std::string& what)
      : Error(what), link_(std::move(link)) {}

  const std::string& link() const noexcept { return link_; }

 private:
  std::string link_;
};

// Policy could not be enacted; the network state is left untouched.
class EnactmentError : public Error {
 public:
  using Error::Error;
};

// Detector used before its warm-up completed.
class WarmupError : public StateError {
 public:
  using StateError::StateError;
};

// Telemetry for a stream that the perception layer does not know.
class StreamError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace resil
