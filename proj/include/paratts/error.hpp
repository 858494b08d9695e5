#pragma once

#include <stdexcept>
#include <string>

namespace paratts {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or unreadable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// Inputs that violate a documented invariant (manifests, configs, requests).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible checkpoint / array files.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Loss or activations became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace paratts
