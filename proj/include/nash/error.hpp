#pragma once

#include <stdexcept>
#include <string>

namespace nash {

enum class ErrorKind {
  ConstantColumn,
  NonFinite,
  ParseError,
  DimensionMismatch,
  LengthMismatch,
  IndexOutOfRange,
  NonPositiveVariance,
  StaleState,
  InvalidArgument,
  NonFiniteGradient,
  QuadratureUnderflow,
  Io,
};

// Input problems map to exit code 2; numerical breakdowns to exit code 3.
inline bool is_numeric_failure(ErrorKind kind) {
  return kind == ErrorKind::NonFiniteGradient || kind == ErrorKind::QuadratureUnderflow ||
         kind == ErrorKind::StaleState;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nash
