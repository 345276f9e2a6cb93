#pragma once

#include <stdexcept>
#include <string>

namespace sharpen {

/// Unknown identifier or a parameter outside its documented range.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A model or class violates a structural invariant (norm bounds, row sums).
class ValidationError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong lifecycle state (sealed session, wrong group).
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class BudgetExhausted : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Enumeration or retry limits exceeded.
class CapacityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class SelectionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConvergenceError : public std::runtime_error {
  public:
    ConvergenceError(const std::string& what, double gradient_norm)
        : std::runtime_error(what + " (final gradient norm " + std::to_string(gradient_norm) + ")"),
          gradient_norm_(gradient_norm) {}

    double gradient_norm() const noexcept { return gradient_norm_; }

  private:
    double gradient_norm_;
};

} // namespace sharpen
