#ifndef GMLEVEL_ERROR_HPP
#define GMLEVEL_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmlevel {

enum class ErrorCode {
  // usage
  UsageError,
  InvalidConfig,
  // data
  EmptyLevel,
  RaggedRows,
  LevelTooSmall,
  IdOutOfRange,
  LengthMismatch,
  MissingLabels,
  ManifestError,
  CheckpointError,
  DimensionMismatch,
  ShapeMismatch,
  ComponentOutOfRange,
  EmptyComponent,
  EmptyMatrix,
  UnsupportedGame,
  UncoveredTile,
  GeneratorFailure,
  // numeric
  NoCache,
  NonPositiveVariance,
  NonPositiveTemperature,
  NonFiniteLoss,
  DegenerateData,
  SingularCovariance,
};

enum class ErrorCategory { Usage, Data, Numeric };

std::string_view error_name(ErrorCode code);
ErrorCategory error_category(ErrorCode code);

/// Every library failure is reported through this exception type; the code
/// decides the CLI exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmptyLevel: return "EmptyLevel";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::LevelTooSmall: return "LevelTooSmall";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::ManifestError: return "ManifestError";
    case ErrorCode::CheckpointError: return "CheckpointError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ComponentOutOfRange: return "ComponentOutOfRange";
    case ErrorCode::EmptyComponent: return "EmptyComponent";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::UnsupportedGame: return "UnsupportedGame";
    case ErrorCode::UncoveredTile: return "UncoveredTile";
    case ErrorCode::GeneratorFailure: return "GeneratorFailure";
    case ErrorCode::NoCache: return "NoCache";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
  }
  return "Unknown";
}

inline ErrorCategory error_category(ErrorCode code) {
  switch (code) {
    case ErrorCode::UsageError:
    case ErrorCode::InvalidConfig:
    case ErrorCode::ComponentOutOfRange:
      return ErrorCategory::Usage;
    case ErrorCode::NoCache:
    case ErrorCode::NonPositiveVariance:
    case ErrorCode::NonPositiveTemperature:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DegenerateData:
    case ErrorCode::SingularCovariance:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace gmlevel

#endif  // GMLEVEL_ERROR_HPP
