#include "dlap/error.hpp"

namespace dlap {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kNotFound: return "not found";
    case ErrorCode::kTransport: return "transport error";
    case ErrorCode::kProtocol: return "protocol error";
    case ErrorCode::kPrecondition: return "precondition failed";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

}  // namespace dlap
