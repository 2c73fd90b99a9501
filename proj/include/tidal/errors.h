#pragma once

#include <stdexcept>
#include <string>

namespace tidal {

// Shape or parameter mismatch detected when wiring components together.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedParameterError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Illegal call sequence, e.g. stepping a terminal world.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tidal
