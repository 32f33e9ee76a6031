#pragma once

#include <stdexcept>
#include <string>

namespace fusegnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad settings, unknown names, inconsistent configuration documents.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor/image shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Unreadable, missing or malformed files and values.
class DataError : public Error {
 public:
  using Error::Error;
};

// Operation invoked outside its contract (e.g. wrong variant for a block).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss) or could not proceed.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace fusegnet
