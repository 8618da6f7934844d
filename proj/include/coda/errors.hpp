#pragma once

#include <stdexcept>
#include <string>

namespace coda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, tensors, labels).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or arguments supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Request conflicts with the current state (stale query, wrong step).
class ConflictError : public Error {
 public:
  using Error::Error;
};

}  // namespace coda
