#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmcl {

using InvalidArgument = std::invalid_argument;

// Dual matrix could not be factorized (e.g. beta = 0 with coincident embeddings).
class NumericalSingularity : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInstance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a caller breaks an API contract that cannot be expressed in types,
// e.g. handing backward() a tape recorded against different parameters.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::string diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

}  // namespace mmcl
