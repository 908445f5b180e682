#pragma once

#include <stdexcept>
#include <string>

namespace hdl {

enum class ErrorKind {
  invalid_argument,
  generation_failure,
  singular_system,
  resource_limit,
  training_failure,
  unsupported_format,
  corrupt_dataset,
  corrupt_checkpoint,
  partial_report,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::generation_failure: return "generation-failure";
    case ErrorKind::singular_system: return "singular-system";
    case ErrorKind::resource_limit: return "resource-limit";
    case ErrorKind::training_failure: return "training-failure";
    case ErrorKind::unsupported_format: return "unsupported-format";
    case ErrorKind::corrupt_dataset: return "corrupt-dataset";
    case ErrorKind::corrupt_checkpoint: return "corrupt-checkpoint";
    case ErrorKind::partial_report: return "partial-report";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so the
/// CLI can name the failing stage and tests can match on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::invalid_argument, what);
}

}  // namespace hdl
