#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prunekit {

enum class ErrorCode {
  MalformedFasta,
  EmptySequence,
  FileNotFound,
  InvalidRate,
  ShapeError,
  InvalidStep,
  NonFiniteGradient,
  EmptyCorpus,
  EmptySubset,
  TooLarge,
  NotPositiveDefinite,
  DidNotConverge,
  ConstantInput,
  InvalidBudget,
  InfeasibleBudget,
  EmptyAfterCutoff,
  BetaExceedsComplement,
  InvalidConfig,
  UnknownConfigKey,
  IdNotInCorpus,
  LeakageError,
  ProvenanceMismatch,
  MalformedFile,
};

std::string_view error_name(ErrorCode code) noexcept;

/// True for errors caused by bad input, configuration or usage (CLI exit 2);
/// false for failures that happen while computing (CLI exit 3).
bool is_usage_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace prunekit
