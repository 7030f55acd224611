#pragma once

#include <stdexcept>
#include <string>

namespace dcpnet {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image or tensor shape is incompatible with the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration value. The message names the key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Input for which the quantity is undefined (zero-norm vectors and similar).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Object used in a state that does not permit the operation.
class StateError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

}  // namespace dcpnet
