#pragma once

#include <stdexcept>
#include <string>

namespace qfpt {

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition (bad dimension, out-of-range value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A model cannot be handled (non-Hermitian H, non-normal L, bad config payload).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A bipartition mixes sub-blocks with different measurement eigenvalues, so the
/// overlap SDE does not close in a single variable.
class ClosureViolated : public ModelError {
 public:
  using ModelError::ModelError;
};

/// Integration diverged, excessive censoring, or a series was evaluated
/// outside its certified range.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace qfpt
