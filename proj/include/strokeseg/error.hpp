#pragma once

#include <stdexcept>
#include <string>

namespace strokeseg {

enum class ErrorKind {
  kShape,         // tensor dimension or layout mismatch
  kInvalidArgument,
  kConfig,        // bad configuration key/value or usage
  kFormat,        // malformed or corrupted file
  kIo,            // filesystem failure
  kNumeric,       // NaN/Inf encountered
  kIncompatible,  // checkpoint does not fit the requested model/data
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

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace strokeseg
