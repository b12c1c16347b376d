#pragma once

#include <stdexcept>
#include <string>

namespace dlap {

// Mirrors dlap_status in dlap.h; keep the numeric values in sync.
enum class ErrorCode {
  kInvalidArgument = 1,
  kIo = 2,
  kFormat = 3,
  kSchema = 4,
  kNotFound = 5,
  kTransport = 6,
  kProtocol = 7,
  kPrecondition = 8,
  kInternal = 9,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dlap
