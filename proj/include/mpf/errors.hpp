#pragma once

#include <stdexcept>
#include <string>

namespace mpf {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// A documented precondition (e.g. row-stochastic input) does not hold.
struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mpf
