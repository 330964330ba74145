#pragma once

#include <stdexcept>
#include <string>

namespace stainkit {

// Domain failures: the input is readable but stain math cannot proceed.
// The CLI maps these to exit code 2.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientTissueError : DomainError {
  explicit InsufficientTissueError(std::size_t found, std::size_t needed)
      : DomainError("insufficient tissue: " + std::to_string(found) +
                    " tissue pixels, need at least " +
                    std::to_string(needed)) {}
};

struct DegenerateColorError : DomainError {
  using DomainError::DomainError;
};

struct ZeroColumnError : DomainError {
  using DomainError::DomainError;
};

struct ZeroMaxConcentrationError : DomainError {
  using DomainError::DomainError;
};

struct UnmappedLabelError : DomainError {
  explicit UnmappedLabelError(const std::string& label)
      : DomainError("label not present in map or drop list: \"" + label +
                    "\"") {}
};

// Contract violations between components; exit code 2 as well.
struct ShapeMismatchError : DomainError {
  using DomainError::DomainError;
};

struct DimensionMismatchError : DomainError {
  using DomainError::DomainError;
};

struct LengthMismatchError : DomainError {
  using DomainError::DomainError;
};

struct EmptyMatrixError : DomainError {
  using DomainError::DomainError;
};

// I/O and parse failures; the CLI maps these to exit code 1.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace stainkit
