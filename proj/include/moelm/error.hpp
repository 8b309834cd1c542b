#pragma once

#include <stdexcept>
#include <string>

namespace moelm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised when a checkpoint cannot be used for the requested stage (untrained
// expert, mismatched expert hash, wrong container kind).
class CheckpointError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace moelm
