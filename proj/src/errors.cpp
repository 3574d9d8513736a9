#include "fatigue/errors.hpp"

namespace fatigue {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyRecipe: return "EmptyRecipe";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::NonAlternatingSequence: return "NonAlternatingSequence";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MeanExceedsUts: return "MeanExceedsUts";
    case ErrorCode::NoDamage: return "NoDamage";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::EmptyExtrema: return "EmptyExtrema";
    case ErrorCode::RhoOutOfRange: return "RhoOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::SingularKernel: return "SingularKernel";
    case ErrorCode::VanishingMass: return "VanishingMass";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::WindowUncovered: return "WindowUncovered";
    case ErrorCode::EmptyResults: return "EmptyResults";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

ErrorKind kind_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::RhoOutOfRange:
    case ErrorCode::DegenerateSplit:
    case ErrorCode::NyquistViolation:
    case ErrorCode::EmptyRecipe:
      return ErrorKind::InvalidConfig;
    case ErrorCode::SingularKernel:
    case ErrorCode::VanishingMass:
    case ErrorCode::DegenerateSpectrum:
    case ErrorCode::NoDamage:
      return ErrorKind::NumericalFailure;
    default:
      return ErrorKind::DataError;
  }
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace fatigue
