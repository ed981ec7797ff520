#pragma once

#include <stdexcept>
#include <string>

namespace phasekit {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible shapes; the message names both shapes.
struct ShapeError : Error { using Error::Error; };

/// Invalid or inconsistent configuration values.
struct ConfigError : Error { using Error::Error; };

/// Malformed or inconsistent data (labels, manifests, datasets).
struct DataError : Error { using Error::Error; };

/// Index outside the valid range.
struct IndexError : Error { using Error::Error; };

/// File system or serialization failure.
struct IoError : Error { using Error::Error; };

/// Misuse of a streaming session (e.g. push after close).
struct SessionError : Error { using Error::Error; };

/// Statistical test input carries no usable signal (e.g. all-zero differences).
struct DegenerateSampleError : Error { using Error::Error; };

}  // namespace phasekit
