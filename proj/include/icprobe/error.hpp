// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace icprobe {

enum class ErrorKind {
  InvalidArgument,  // caller violated a precondition
  Dimension,        // shapes do not agree
  Parse,            // malformed persisted input
  Version,          // persisted input has an unsupported version
  Io,               // filesystem failure
  Runtime,          // anything else
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace icprobe
