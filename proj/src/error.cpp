// SPDX-License-Identifier: Apache-2.0

#include "icprobe/error.hpp"

namespace icprobe {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Version: return "version error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Runtime: return "runtime error";
  }
  return "unknown error";
}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace icprobe
