#include "prunekit/error.hpp"

namespace prunekit {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedFasta: return "MalformedFasta";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InvalidStep: return "InvalidStep";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DidNotConverge: return "DidNotConverge";
    case ErrorCode::ConstantInput: return "ConstantInput";
    case ErrorCode::InvalidBudget: return "InvalidBudget";
    case ErrorCode::InfeasibleBudget: return "InfeasibleBudget";
    case ErrorCode::EmptyAfterCutoff: return "EmptyAfterCutoff";
    case ErrorCode::BetaExceedsComplement: return "BetaExceedsComplement";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnknownConfigKey: return "UnknownConfigKey";
    case ErrorCode::IdNotInCorpus: return "IdNotInCorpus";
    case ErrorCode::LeakageError: return "LeakageError";
    case ErrorCode::ProvenanceMismatch: return "ProvenanceMismatch";
    case ErrorCode::MalformedFile: return "MalformedFile";
  }
  return "UnknownError";
}

bool is_usage_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedFasta:
    case ErrorCode::EmptySequence:
    case ErrorCode::FileNotFound:
    case ErrorCode::InvalidRate:
    case ErrorCode::InvalidStep:
    case ErrorCode::EmptyCorpus:
    case ErrorCode::EmptySubset:
    case ErrorCode::InvalidBudget:
    case ErrorCode::InfeasibleBudget:
    case ErrorCode::EmptyAfterCutoff:
    case ErrorCode::BetaExceedsComplement:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnknownConfigKey:
    case ErrorCode::IdNotInCorpus:
    case ErrorCode::LeakageError:
    case ErrorCode::ProvenanceMismatch:
    case ErrorCode::MalformedFile:
      return true;
    default:
      return false;
  }
}

}  // namespace prunekit
