#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace genusflow {

enum class ErrorKind {
  pole,
  domain,
  syntax,
  unknown_identifier,
  evaluation,
  step_limit,
  cusp_hit,
  non_finite,
  no_convergence,
  singular_jacobian,
  no_winding,
  equilibrium_on_circle,
  non_integer_winding,
  reduction_limit,
  input,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::pole: return "pole";
    case ErrorKind::domain: return "domain";
    case ErrorKind::syntax: return "syntax";
    case ErrorKind::unknown_identifier: return "unknown-identifier";
    case ErrorKind::evaluation: return "evaluation";
    case ErrorKind::step_limit: return "step-limit";
    case ErrorKind::cusp_hit: return "cusp-hit";
    case ErrorKind::non_finite: return "non-finite";
    case ErrorKind::no_convergence: return "no-convergence";
    case ErrorKind::singular_jacobian: return "singular-jacobian";
    case ErrorKind::no_winding: return "no-winding";
    case ErrorKind::equilibrium_on_circle: return "equilibrium-on-circle";
    case ErrorKind::non_integer_winding: return "non-integer-winding";
    case ErrorKind::reduction_limit: return "reduction-limit";
    case ErrorKind::input: return "input";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure; `offset` is the byte offset into the source text.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& msg)
      : Error(ErrorKind::syntax,
              "syntax error at offset " + std::to_string(offset) + ": " + msg),
        offset_(offset),
        message_(msg) {}

  std::size_t offset() const noexcept { return offset_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::size_t offset_;
  std::string message_;
};

}  // namespace genusflow
