#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sigdet {

/// Machine-readable failure categories shared by every module and surfaced
/// verbatim by the CLI.
enum class ErrorCode {
  InvalidArgument,
  NonFiniteKernel,
  ZeroMass,
  QuadratureFailure,
  RootFindFailure,
  LambdaOutOfRange,
  BumpCenterOutsideRegion,
  DegenerateSignal,
  SupportMismatch,
  EmptySample,
  ObservationOutsideRegion,
  DegenerateDenominator,
  ZeroVariance,
  OptimizationFailure,
  NonFiniteLogLik,
  SingularInformation,
  FdStepInvalid,
  RegionExceedsSupport,
  FlatLikelihood,
  DomainError,
  CampaignDegenerate,
  ParseError,
  EmptyFile,
  ValueOutsideRegion,
  ConfigError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteKernel: return "NonFiniteKernel";
    case ErrorCode::ZeroMass: return "ZeroMass";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::RootFindFailure: return "RootFindFailure";
    case ErrorCode::LambdaOutOfRange: return "LambdaOutOfRange";
    case ErrorCode::BumpCenterOutsideRegion: return "BumpCenterOutsideRegion";
    case ErrorCode::DegenerateSignal: return "DegenerateSignal";
    case ErrorCode::SupportMismatch: return "SupportMismatch";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::ObservationOutsideRegion: return "ObservationOutsideRegion";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::OptimizationFailure: return "OptimizationFailure";
    case ErrorCode::NonFiniteLogLik: return "NonFiniteLogLik";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::FdStepInvalid: return "FdStepInvalid";
    case ErrorCode::RegionExceedsSupport: return "RegionExceedsSupport";
    case ErrorCode::FlatLikelihood: return "FlatLikelihood";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::CampaignDegenerate: return "CampaignDegenerate";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::ValueOutsideRegion: return "ValueOutsideRegion";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace sigdet
