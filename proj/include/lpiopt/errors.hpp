#pragma once

#include <stdexcept>
#include <string>

namespace lpiopt {

/// Query point or argument outside the admissible domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A grid, matrix or schedule would exceed a configured size cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or incomplete user input (values, datasets, configs).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing or contradictory configuration, e.g. F_* needed but unknown.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parameter regime the requested mode cannot handle (sigma = 1 in theory mode).
class UnsupportedRegimeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// B(x) is singular or too badly conditioned to solve.
class IllPosedFitError : public std::runtime_error {
 public:
  IllPosedFitError(const std::string& what, double lambda_min, double condition)
      : std::runtime_error(what), lambda_min_(lambda_min), condition_(condition) {}

  double lambda_min() const { return lambda_min_; }
  double condition() const { return condition_; }

 private:
  double lambda_min_;
  double condition_;
};

}  // namespace lpiopt
