#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mstack {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

enum class ErrorCode {
  InvalidArgument,
  IndexOutOfRange,
  EmptySet,
  DuplicatePair,
  ShapeMismatch,
  SingularDesign,
  SingularSystem,
  FoldTooSmall,
  DegenerateScaling,
  InsufficientStudies,
  StudyTooSmall,
  DimensionTooLarge,
  NonFiniteObjective,
  NotConverged,
  Undefined,
  DataError,
  ConfigError,
};

const char* error_name(ErrorCode c);

// Every library failure is an Error carrying a code the CLI maps to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_name(code)) + ": " + msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mstack
