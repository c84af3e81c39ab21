#pragma once

#include <stdexcept>
#include <string>

namespace ptoc {

// Bad input data or configuration. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver breakdown. The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

class WindowTooLong : public DataError {
 public:
  using DataError::DataError;
};

class EmptySplit : public DataError {
 public:
  using DataError::DataError;
};

class ShapeMismatch : public DataError {
 public:
  using DataError::DataError;
};

class InfeasibleBounds : public DataError {
 public:
  using DataError::DataError;
};

class NoEdges : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateTarget : public DataError {
 public:
  using DataError::DataError;
};

class NonpositiveBaseline : public DataError {
 public:
  using DataError::DataError;
};

class TapeReused : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class LpInfeasible : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ptoc
