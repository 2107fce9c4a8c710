#pragma once

#include <stdexcept>
#include <string>

namespace rpbart {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (bad sizes, bad ranges).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Reference to a node that does not exist, or a malformed topology.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A tree whose split rules are inconsistent with its cutpoint grid.
class InvalidTreeError : public Error {
 public:
  using Error::Error;
};

/// Query outside the domain of a gridded field (no extrapolation).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Configuration values failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Input data could not be read or contains unusable values.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Archive written by an incompatible format version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace rpbart
