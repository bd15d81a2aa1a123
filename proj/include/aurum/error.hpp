#pragma once

#include <stdexcept>
#include <string>

namespace aurum {

/// Root of every error raised by the library. `kind()` is a short stable tag
/// ("format", "shape", ...) that callers can switch on without RTTI.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message);
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define AURUM_DECLARE_ERROR(Name, tag)                                   \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message) : Error(tag, message) {}   \
  }

AURUM_DECLARE_ERROR(FormatError, "format");
AURUM_DECLARE_ERROR(TruncationError, "truncation");
AURUM_DECLARE_ERROR(DataError, "data");
AURUM_DECLARE_ERROR(ShapeError, "shape");
AURUM_DECLARE_ERROR(ParameterError, "parameter");
AURUM_DECLARE_ERROR(IoError, "io");
AURUM_DECLARE_ERROR(ContractError, "contract");
AURUM_DECLARE_ERROR(TrainingError, "training");
AURUM_DECLARE_ERROR(VersionError, "version");
AURUM_DECLARE_ERROR(DegenerateInputError, "degenerate-input");
AURUM_DECLARE_ERROR(SamplingError, "sampling");

#undef AURUM_DECLARE_ERROR

}  // namespace aurum
