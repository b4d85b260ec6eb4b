#include "cellprog/error.hpp"

namespace cellprog {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::MalformedReference: return "malformed-reference";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::InsufficientReferences: return "insufficient-references";
    case ErrorKind::IdParse: return "id-parse";
    case ErrorKind::InvalidRecord: return "invalid-record";
    case ErrorKind::EmptyPattern: return "empty-pattern";
    case ErrorKind::EmptyDataset: return "empty-dataset";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::Conditioning: return "conditioning";
    case ErrorKind::Optimization: return "optimization";
    case ErrorKind::Incompatible: return "incompatible";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::DivisionByZero: return "division-by-zero";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::EmptyOutput: return "empty-output";
  }
  return "unknown";
}

}  // namespace cellprog
