#pragma once

#include <stdexcept>
#include <string>

namespace mkl {

// Base of everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing files, unreadable or malformed input.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input that parsed but violates a contract: shape mismatch, bad parameter,
// asymmetric matrix, single-class labels and so on.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// The optimizer or a root finder could not produce a usable answer.
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace mkl
