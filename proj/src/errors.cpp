#include "panelbridge/errors.hpp"

namespace panelbridge {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::TreatmentNotConstantWithinUnit: return "TreatmentNotConstantWithinUnit";
    case ErrorCode::HorizonTooLarge: return "HorizonTooLarge";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ExponentOutOfWindow: return "ExponentOutOfWindow";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonPositiveDefiniteWeight: return "NonPositiveDefiniteWeight";
    case ErrorCode::DegenerateGroup: return "DegenerateGroup";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::EigenFailure: return "EigenFailure";
    case ErrorCode::SingularConfounderCov: return "SingularConfounderCov";
    case ErrorCode::SingularVbar: return "SingularVbar";
    case ErrorCode::SingularPenalizedSystem: return "SingularPenalizedSystem";
    case ErrorCode::RankDeficientLoadings: return "RankDeficientLoadings";
    case ErrorCode::TargetNotUnique: return "TargetNotUnique";
    case ErrorCode::SingularSigma0: return "SingularSigma0";
  }
  return "UnknownError";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::MissingCell:
    case ErrorCode::TreatmentNotConstantWithinUnit:
    case ErrorCode::HorizonTooLarge:
    case ErrorCode::ConfigInvalid:
    case ErrorCode::ExponentOutOfWindow:
    case ErrorCode::DomainError:
    case ErrorCode::DimensionMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace panelbridge
