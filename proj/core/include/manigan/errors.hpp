#pragma once

#include <stdexcept>
#include <string>

namespace manigan {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or resolution mismatch between tensors/operands.
struct DimensionError : Error {
  using Error::Error;
};

/// Invalid configuration value (bad hyperparameter, empty corpus, ...).
struct ConfigError : Error {
  using Error::Error;
};

/// Operation invoked before its preconditioned state was reached
/// (e.g. matching encoders used before pretraining).
struct StateError : Error {
  using Error::Error;
};

/// Token/index problems while encoding text.
struct EncodingError : Error {
  using Error::Error;
};

/// NaN/Inf or other numeric breakdown.
struct NumericError : Error {
  using Error::Error;
};

/// File I/O, serialization and manifest problems.
struct IoError : Error {
  using Error::Error;
};

}  // namespace manigan
