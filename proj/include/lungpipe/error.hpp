#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lungpipe {

/// Base of every error raised by the library. `kind()` is the stable,
/// machine-readable error name used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define LUNGPIPE_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  };

LUNGPIPE_DEFINE_ERROR(FormatError)
LUNGPIPE_DEFINE_ERROR(CorruptData)
LUNGPIPE_DEFINE_ERROR(IoError)
LUNGPIPE_DEFINE_ERROR(ConfigError)
LUNGPIPE_DEFINE_ERROR(ResampleError)
LUNGPIPE_DEFINE_ERROR(OutOfBounds)
LUNGPIPE_DEFINE_ERROR(NoLungFound)
LUNGPIPE_DEFINE_ERROR(VolumeTooSmall)
LUNGPIPE_DEFINE_ERROR(ParseError)
LUNGPIPE_DEFINE_ERROR(ValidationError)
LUNGPIPE_DEFINE_ERROR(ArchError)
LUNGPIPE_DEFINE_ERROR(DataError)
LUNGPIPE_DEFINE_ERROR(IntegrationError)
LUNGPIPE_DEFINE_ERROR(FoldError)
LUNGPIPE_DEFINE_ERROR(EmptyEvaluation)
LUNGPIPE_DEFINE_ERROR(SpecError)

#undef LUNGPIPE_DEFINE_ERROR

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& message)
      : Error("DivergenceError", message), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// A pipeline stage failed for one scan.
class StageError : public Error {
 public:
  StageError(std::string stage, std::string scan_id, std::string inner_kind,
             const std::string& message)
      : Error("StageError", message),
        stage_(std::move(stage)),
        scan_id_(std::move(scan_id)),
        inner_kind_(std::move(inner_kind)) {}

  const std::string& stage() const noexcept { return stage_; }
  const std::string& scan_id() const noexcept { return scan_id_; }
  const std::string& inner_kind() const noexcept { return inner_kind_; }

 private:
  std::string stage_;
  std::string scan_id_;
  std::string inner_kind_;
};

}  // namespace lungpipe
