#pragma once

#include <stdexcept>
#include <string>

namespace ttm {

/// Shapes of two operands disagree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value is outside the domain an operation accepts (NaN, non-binary label, bad ratio).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file or config document does not have the expected structure.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric is undefined for the given input (e.g. AUC with one class).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ttm
