#pragma once

#include <stdexcept>
#include <string>

namespace fatigue {

/// Broad failure class. The CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidConfig,     // exit 2
  DataError,         // exit 3
  NumericalFailure,  // exit 4
};

enum class ErrorCode {
  InvalidArgument,
  EmptyRecipe,
  NyquistViolation,
  NonAlternatingSequence,
  TooShort,
  MeanExceedsUts,
  NoDamage,
  DegenerateSpectrum,
  EmptyExtrema,
  RhoOutOfRange,
  DimensionMismatch,
  EmptyBatch,
  EmptySet,
  SingularKernel,
  VanishingMass,
  DegenerateSplit,
  WindowUncovered,
  EmptyResults,
  GenerationFailed,
  Io,
  Parse,
};

const char* to_string(ErrorCode code) noexcept;
ErrorKind kind_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return kind_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace fatigue
