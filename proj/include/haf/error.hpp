#pragma once

#include <stdexcept>
#include <string>

namespace haf {

enum class ErrorCode {
  // taxonomy
  NonUniformDepth,
  DuplicateLeaf,
  MalformedPath,
  EmptyFile,
  IndexOutOfRange,
  LevelOutOfRange,
  // numeric
  NonFiniteInput,
  NonFiniteEvaluation,
  ZeroWeightRow,
  LengthMismatch,
  ShapeMismatch,
  // losses
  DegenerateChildSum,
  // metrics
  RankListTooShort,
  SingleClass,
  // data
  InvalidConfig,
  UnknownLabel,
  RaggedRow,
  NonNumericFeature,
  // trainer / cli
  DivergedLoss,
  IoError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace haf
