#pragma once

#include <stdexcept>
#include <string>

namespace path_engine {

/// Base class of every error thrown by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Image extents that do not tile into patches.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment, head, or plan configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Object used before it was initialized.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Unknown parameter or group name.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Gradient exchange violated the synchronization contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Training-mode batch normalization over a single sample.
class DegenerateBatchError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Unreadable or malformed checkpoint file.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace path_engine
