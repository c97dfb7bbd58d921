#pragma once

#include <stdexcept>
#include <string>

namespace linkdist {

enum class ErrorCode {
  kDimension = 1,
  kValidation,
  kFormat,
  kIo,
  kDegenerateBatch,
  kInsufficientNodes,
  kNoEdges,
  kSampling,
  kDeterminism,
  kUsage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace linkdist
