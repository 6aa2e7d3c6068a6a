#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hazardforge {

enum class ErrorKind {
  kEmptyStream,
  kSchemaMismatch,
  kSchemaMissing,
  kDegenerateData,
  kOutOfRange,
  kSingleClass,
  kTooFewGroups,
  kRateBoundViolated,
  kParseError,
  kInvalidArgument,
  kIoError,
};

std::string_view to_string(ErrorKind kind);

// All module failures surface as this exception; the CLI maps `kind` to an
// exit code and a machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace hazardforge
