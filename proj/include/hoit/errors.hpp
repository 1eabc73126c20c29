#pragma once

#include <stdexcept>
#include <string>

namespace hoit {

// Shapes are not conformable for the requested primitive.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf where a finite value is required, or an argument outside a
// function's domain.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Invalid hyper-parameter or model/training configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke an API precondition (non-scalar loss, non-permutation, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input data: annotations, images, checkpoints, detections.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hoit
