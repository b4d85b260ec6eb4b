#pragma once

#include <stdexcept>
#include <string>

namespace cellprog {

enum class ErrorKind {
  Io,
  Parse,
  MalformedReference,
  Ordering,
  InsufficientReferences,
  IdParse,
  InvalidRecord,
  EmptyPattern,
  EmptyDataset,
  InvalidConfig,
  DimensionMismatch,
  Conditioning,
  Optimization,
  Incompatible,
  LengthMismatch,
  EmptyInput,
  DivisionByZero,
  Contract,
  EmptyOutput,
};

const char* to_string(ErrorKind kind);

/// Exception carrying a machine-checkable category alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cellprog
