#pragma once

#include <stdexcept>
#include <string>

namespace pdenoise {

/// Broad failure class; the CLI maps each to an exit code.
enum class ErrorCategory {
  validation,  // bad input, schedule, dimensions, empty sets
  numeric,     // a computation could not produce a finite answer
  io,          // file system or parse failures
};

/// Base of every error thrown by the library. `name()` is the module-level
/// error name printed by the CLI (e.g. "ScheduleError").
class Error : public std::runtime_error {
 public:
  Error(std::string name, ErrorCategory category, const std::string& message)
      : std::runtime_error(message), name_(std::move(name)), category_(category) {}

  const std::string& name() const noexcept { return name_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string name_;
  ErrorCategory category_;
};

#define PDENOISE_DEFINE_ERROR(Type, Category)                                  \
  class Type : public Error {                                                 \
   public:                                                                    \
    explicit Type(const std::string& message)                                 \
        : Error(#Type, ErrorCategory::Category, message) {}                   \
  };

PDENOISE_DEFINE_ERROR(ValidationError, validation)
PDENOISE_DEFINE_ERROR(ScheduleError, validation)
PDENOISE_DEFINE_ERROR(DimensionMismatch, validation)
PDENOISE_DEFINE_ERROR(EmptyAfterTruncation, validation)
PDENOISE_DEFINE_ERROR(SnapshotNotFound, validation)
PDENOISE_DEFINE_ERROR(TooFewPoints, validation)
PDENOISE_DEFINE_ERROR(EmptyInput, validation)
PDENOISE_DEFINE_ERROR(TooLarge, validation)
PDENOISE_DEFINE_ERROR(SingularCovariance, numeric)
PDENOISE_DEFINE_ERROR(NumericFailure, numeric)
PDENOISE_DEFINE_ERROR(IoError, io)
PDENOISE_DEFINE_ERROR(ParseError, io)

#undef PDENOISE_DEFINE_ERROR

}  // namespace pdenoise
