#ifndef ADACBM_ERROR_HPP_
#define ADACBM_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace adacbm {

enum class ErrorCode {
  kIo,
  kEmptyMatrix,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedFile,
  kNonFiniteValue,
  kMalformedJson,
  kDuplicateId,
  kLabelOutOfRange,
  kLengthMismatch,
  kDimensionMismatch,
  kInsufficientSamples,
  kInsufficientCandidates,
  kInvalidArgument,
  kUnknownConcept,
  kUnknownId,
  kMissingSelection,
  kEmptyDataset,
};

std::string_view error_code_name(ErrorCode code);

// Every recoverable failure in the library surfaces as this exception.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace adacbm

#endif  // ADACBM_ERROR_HPP_
