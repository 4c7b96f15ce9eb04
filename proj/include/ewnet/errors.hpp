#pragma once

#include <stdexcept>
#include <string>

namespace ewnet {

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct InvalidActivation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NormalizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TableRangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BracketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ewnet
