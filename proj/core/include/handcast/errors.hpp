#pragma once

#include <stdexcept>
#include <string>

namespace handcast {

// Base of every error thrown by the library. Callers that only need a
// message can catch this; the subclasses exist so tests and the CLI can
// tell failure classes apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Degenerate or non-orthonormal rotation input.
class InvalidRotationError : public Error {
 public:
  using Error::Error;
};

// A point lies on the camera plane (|z| ~ 0) and cannot be projected.
class CameraPlaneError : public Error {
 public:
  using Error::Error;
};

// Shape, range, or precondition violation by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset, checkpoint, or report could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

// Dataset record failed to parse or validate. `line` is 1-based; 0 when unknown.
class LoadError : public Error {
 public:
  LoadError(const std::string& what, std::size_t line, std::string record_id = {})
      : Error(what), line_(line), record_id_(std::move(record_id)) {}
  std::size_t line() const { return line_; }
  const std::string& record_id() const { return record_id_; }

 private:
  std::size_t line_;
  std::string record_id_;
};

// Training produced a non-finite loss or gradient.
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace handcast
