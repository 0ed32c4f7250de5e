#pragma once

#include <stdexcept>
#include <string>

namespace reid {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// scene graphs
class DoubleReversal : public Error {
 public:
  using Error::Error;
};
class RepairUnavailable : public Error {
 public:
  using Error::Error;
};
class RepairFailed : public Error {
 public:
  using Error::Error;
};

// external clients
class EmbedUnavailable : public Error {
 public:
  using Error::Error;
};
class BackboneUnavailable : public Error {
 public:
  using Error::Error;
};
class LvlmUnavailable : public Error {
 public:
  using Error::Error;
};

class MissingPersonNode : public Error {
 public:
  using Error::Error;
};
class DecodeError : public Error {
 public:
  using Error::Error;
};

// training / evaluation
class DegenerateBatch : public Error {
 public:
  using Error::Error;
};
class InsufficientIdentities : public Error {
 public:
  using Error::Error;
};
class FilenameFormat : public Error {
 public:
  using Error::Error;
};
class ManifestError : public Error {
 public:
  using Error::Error;
};
class CheckpointError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace reid
