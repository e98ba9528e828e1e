#pragma once

#include <stdexcept>
#include <string>

namespace panelbridge {

// Coded failure categories. Validation-type codes map to CLI exit code 2,
// estimation-type codes to exit code 3.
enum class ErrorCode {
  // data / config validation
  ParseError,
  MissingCell,
  TreatmentNotConstantWithinUnit,
  HorizonTooLarge,
  ConfigInvalid,
  ExponentOutOfWindow,
  DomainError,
  DimensionMismatch,
  // numerics / estimation
  NonFiniteInput,
  SingularSystem,
  NonPositiveDefiniteWeight,
  DegenerateGroup,
  SingularDesign,
  RankTooLarge,
  EigenFailure,
  SingularConfounderCov,
  SingularVbar,
  SingularPenalizedSystem,
  RankDeficientLoadings,
  TargetNotUnique,
  SingularSigma0,
};

const char* error_code_name(ErrorCode code);

// Whether a code denotes bad input (as opposed to a numerical/estimation failure).
bool is_validation_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace panelbridge
