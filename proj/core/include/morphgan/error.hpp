#pragma once

#include <stdexcept>
#include <string>

namespace morphgan {

/// Root of every exception thrown by the library. The CLI maps subclasses
/// onto exit codes, so keep the hierarchy flat.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad caller-supplied value (counts, sizes, layout).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration: overlapping identity ranges, bad milestones...
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes or weight sets that do not match a network spec.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// NaN / Inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Mutable training state is not in a usable condition (e.g. too few centroids).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Dataset does not support the requested operation (too few identities...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Archive written by an incompatible format version.
class IncompatibleVersionError : public Error {
 public:
  using Error::Error;
};

/// Archive truncated or checksum mismatch.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

void require(bool condition, const std::string& message);

}  // namespace morphgan
